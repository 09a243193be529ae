#include "slate_ope/dataset_io.hpp"

#include <fstream>
#include <sstream>
#include <string>

namespace slate_ope {
namespace {

constexpr const char* kFormatTag = "slate-ope-dataset";

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
  throw ValidationError("line " + std::to_string(line) + ": " + what);
}

template <typename T>
std::vector<T> array_field(const nlohmann::json& obj, const char* key, std::size_t line,
                           std::size_t expected) {
  if (!obj.contains(key) || !obj.at(key).is_array()) {
    line_error(line, std::string("missing array field '") + key + "'");
  }
  std::vector<T> out;
  try {
    out = obj.at(key).get<std::vector<T>>();
  } catch (const nlohmann::json::exception&) {
    line_error(line, std::string("field '") + key + "' has non-numeric entries");
  }
  if (expected != 0 && out.size() != expected) {
    line_error(line, std::string("field '") + key + "' has " + std::to_string(out.size()) +
                         " entries, expected " + std::to_string(expected));
  }
  return out;
}

}  // namespace

void save_dataset(const LoggedDataset& data, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  const nlohmann::json header = {{"format", kFormatTag},
                                 {"slate_size", data.slate_size()},
                                 {"n_actions", data.n_actions()},
                                 {"dim", data.dim()},
                                 {"alpha", data.alpha().values()}};
  out << header.dump() << '\n';
  for (const auto& rec : data.records()) {
    nlohmann::json line = {{"context", rec.context}, {"slate", rec.slate}, {"rewards", rec.rewards}};
    if (rec.has_propensities()) line["propensities"] = rec.propensities;
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

LoggedDataset load_dataset(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::string text;
  std::size_t line_no = 0;
  int L = 0;
  int A = 0;
  int d = 0;
  std::vector<double> alpha;
  bool have_header = false;
  std::vector<LoggedRecord> records;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      line_error(line_no, std::string("not valid JSON (") + e.what() + ")");
    }
    if (!obj.is_object()) line_error(line_no, "expected a JSON object");
    if (!have_header) {
      if (obj.value("format", std::string()) != kFormatTag) {
        line_error(line_no, "missing dataset header");
      }
      try {
        L = obj.at("slate_size").get<int>();
        A = obj.at("n_actions").get<int>();
        d = obj.at("dim").get<int>();
      } catch (const nlohmann::json::exception&) {
        line_error(line_no, "header needs integer slate_size, n_actions and dim");
      }
      if (L < 1 || A < 1 || d < 0) line_error(line_no, "header has non-positive sizes");
      alpha = array_field<double>(obj, "alpha", line_no, static_cast<std::size_t>(L));
      have_header = true;
      continue;
    }
    LoggedRecord rec;
    rec.context = array_field<double>(obj, "context", line_no, 0);
    if (rec.context.size() != static_cast<std::size_t>(d)) {
      line_error(line_no, "context has " + std::to_string(rec.context.size()) +
                              " entries, header says dim " + std::to_string(d));
    }
    rec.slate = array_field<int>(obj, "slate", line_no, static_cast<std::size_t>(L));
    for (int a : rec.slate) {
      if (a < 0 || a >= A) line_error(line_no, "slate action out of range");
    }
    rec.rewards = array_field<double>(obj, "rewards", line_no, static_cast<std::size_t>(L));
    if (obj.contains("propensities") && !obj.at("propensities").is_null()) {
      rec.propensities = array_field<double>(obj, "propensities", line_no, 0);
      if (!rec.propensities.empty() && rec.propensities.size() != static_cast<std::size_t>(L)) {
        line_error(line_no, "propensities must have L entries");
      }
      for (double p : rec.propensities) {
        if (!(p > 0.0 && p <= 1.0)) line_error(line_no, "propensities must lie in (0, 1]");
      }
    }
    records.push_back(std::move(rec));
  }
  if (in.bad()) throw IoError("failed reading " + path.string());
  if (!have_header) throw ValidationError(path.string() + ": empty dataset file");
  if (records.empty()) throw ValidationError(path.string() + ": dataset has no records");
  return LoggedDataset(std::move(records), L, A, AlphaWeights(std::move(alpha)));
}

void save_policy(const Policy& policy, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << policy.to_json().dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json load_json_file(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return nlohmann::json::parse(buffer.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

PolicyPtr load_policy(const std::filesystem::path& path) {
  return policy_from_json(load_json_file(path));
}

}  // namespace slate_ope
