#include "slate_ope/core.hpp"

#include <cmath>
#include <numeric>

namespace slate_ope {

AlphaWeights::AlphaWeights(std::vector<double> weights)
    : weights_(std::move(weights)) {
  if (weights_.empty()) throw ValidationError("alpha weights must not be empty");
  for (double w : weights_) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ValidationError("alpha weights must be finite and non-negative");
    }
  }
}

double AlphaWeights::total() const {
  return std::accumulate(weights_.begin(), weights_.end(), 0.0);
}

AlphaWeights make_alpha_weights(AlphaWeights::Kind kind, int slate_size,
                                std::span<const double> custom) {
  if (slate_size < 1) throw ValidationError("slate size must be positive");
  std::vector<double> w(static_cast<std::size_t>(slate_size), 1.0);
  switch (kind) {
    case AlphaWeights::Kind::kUniform:
      break;
    case AlphaWeights::Kind::kDcg:
      for (int l = 1; l <= slate_size; ++l) w[l - 1] = 1.0 / std::log2(l + 1.0);
      break;
    case AlphaWeights::Kind::kCustom:
      if (custom.size() != w.size()) {
        throw ValidationError("custom alpha weights must have length L");
      }
      w.assign(custom.begin(), custom.end());
      break;
  }
  return AlphaWeights(std::move(w));
}

AlphaWeights::Kind parse_alpha_kind(const std::string& name) {
  if (name == "uniform") return AlphaWeights::Kind::kUniform;
  if (name == "dcg") return AlphaWeights::Kind::kDcg;
  if (name == "custom") return AlphaWeights::Kind::kCustom;
  throw ValidationError("unknown alpha kind: " + name);
}

std::string to_string(AlphaWeights::Kind kind) {
  switch (kind) {
    case AlphaWeights::Kind::kUniform: return "uniform";
    case AlphaWeights::Kind::kDcg: return "dcg";
    case AlphaWeights::Kind::kCustom: return "custom";
  }
  return "custom";
}

double slate_reward(std::span<const double> rewards, const AlphaWeights& alpha) {
  if (rewards.size() != alpha.size()) {
    throw ValidationError("reward vector and alpha weights differ in length");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < rewards.size(); ++l) total += alpha[l] * rewards[l];
  return total;
}

LoggedDataset::LoggedDataset(std::vector<LoggedRecord> records, int slate_size,
                             int n_actions, AlphaWeights alpha)
    : records_(std::move(records)),
      slate_size_(slate_size),
      n_actions_(n_actions),
      dim_(0),
      alpha_(std::move(alpha)) {
  if (records_.empty()) throw ValidationError("dataset must contain at least one record");
  if (slate_size_ < 1 || n_actions_ < 1) {
    throw ValidationError("slate size and action count must be positive");
  }
  if (alpha_.size() != static_cast<std::size_t>(slate_size_)) {
    throw ValidationError("alpha weights must have length L");
  }
  dim_ = static_cast<int>(records_.front().context.size());
  const auto L = static_cast<std::size_t>(slate_size_);
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const LoggedRecord& rec = records_[i];
    const std::string where = "record " + std::to_string(i) + ": ";
    if (rec.context.size() != static_cast<std::size_t>(dim_)) {
      throw ValidationError(where + "context dimension mismatch");
    }
    for (double v : rec.context) {
      if (!std::isfinite(v)) throw ValidationError(where + "non-finite context value");
    }
    if (rec.slate.size() != L) throw ValidationError(where + "slate length != L");
    for (int a : rec.slate) {
      if (a < 0 || a >= n_actions_) throw ValidationError(where + "action index out of range");
    }
    if (rec.rewards.size() != L) throw ValidationError(where + "reward vector length != L");
    for (double r : rec.rewards) {
      if (!std::isfinite(r)) throw ValidationError(where + "non-finite reward");
    }
    if (rec.has_propensities()) {
      if (rec.propensities.size() != L) {
        throw ValidationError(where + "propensity vector length != L");
      }
      for (double p : rec.propensities) {
        if (!(p > 0.0 && p <= 1.0)) {
          throw ValidationError(where + "propensities must lie in (0, 1]");
        }
      }
    }
  }
}

LoggedDataset LoggedDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<LoggedRecord> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(records_.at(i));
  return LoggedDataset(std::move(picked), slate_size_, n_actions_, alpha_);
}

}  // namespace slate_ope
