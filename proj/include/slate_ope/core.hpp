#pragma once

// Domain types shared by every module: contexts, slates, slot rewards,
// slot weights and logged datasets.
//
// Slot indices are 0-based in code. Documentation that talks about "slot l"
// with l starting at 1 says so explicitly.

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace slate_ope {

// Raised for violated preconditions on user-supplied inputs (shape
// mismatches, out-of-range parameters, missing propensities, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Context = std::vector<double>;
using Slate = std::vector<int>;
using RewardVector = std::vector<double>;

// Non-negative per-slot weights alpha_l defining the slate-level reward
// r* = sum_l alpha_l r_l.
class AlphaWeights {
 public:
  enum class Kind { kUniform, kDcg, kCustom };

  AlphaWeights() = default;
  explicit AlphaWeights(std::vector<double> weights);

  std::size_t size() const { return weights_.size(); }
  double operator[](std::size_t slot) const { return weights_[slot]; }
  const std::vector<double>& values() const { return weights_; }
  double total() const;

  bool operator==(const AlphaWeights&) const = default;

 private:
  std::vector<double> weights_;
};

// uniform -> 1, dcg -> 1/log2(l+1) for l = 1..L, custom -> copy of `custom`.
AlphaWeights make_alpha_weights(AlphaWeights::Kind kind, int slate_size,
                                std::span<const double> custom = {});

AlphaWeights::Kind parse_alpha_kind(const std::string& name);
std::string to_string(AlphaWeights::Kind kind);

double slate_reward(std::span<const double> rewards, const AlphaWeights& alpha);

struct LoggedRecord {
  Context context;
  Slate slate;
  RewardVector rewards;
  // Per-slot behavior probabilities pi_b(a_l | x, a_{1:l-1}) of the logged
  // slate. Empty when the log does not carry them.
  std::vector<double> propensities;

  bool has_propensities() const { return !propensities.empty(); }
};

// An immutable collection of logged records sharing L, |A| and d.
class LoggedDataset {
 public:
  LoggedDataset(std::vector<LoggedRecord> records, int slate_size,
                int n_actions, AlphaWeights alpha);

  std::size_t size() const { return records_.size(); }
  const LoggedRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<LoggedRecord>& records() const { return records_; }

  int slate_size() const { return slate_size_; }
  int n_actions() const { return n_actions_; }
  int dim() const { return dim_; }
  const AlphaWeights& alpha() const { return alpha_; }

  // Records picked by index (duplicates allowed); used by resampling.
  LoggedDataset subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<LoggedRecord> records_;
  int slate_size_;
  int n_actions_;
  int dim_;
  AlphaWeights alpha_;
};

}  // namespace slate_ope
