#pragma once

// Line-delimited JSON dataset files and JSON policy files.
//
// Dataset layout: the first line is a header object
//   {"format": "slate-ope-dataset", "slate_size": L, "n_actions": |A|,
//    "dim": d, "alpha": [...]}
// and every following non-empty line is one record
//   {"context": [...], "slate": [...], "rewards": [...], "propensities": [...]}
// with "propensities" optional. Slates are 0-based action indices; array
// position k is slot k + 1.

#include <filesystem>
#include <stdexcept>

#include "slate_ope/core.hpp"
#include "slate_ope/policy.hpp"

namespace slate_ope {

// The file could not be opened, read or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_dataset(const LoggedDataset& data, const std::filesystem::path& path);
// Malformed content raises ValidationError naming the offending line.
LoggedDataset load_dataset(const std::filesystem::path& path);

void save_policy(const Policy& policy, const std::filesystem::path& path);
PolicyPtr load_policy(const std::filesystem::path& path);

// Reads a whole file into a JSON document.
nlohmann::json load_json_file(const std::filesystem::path& path);

}  // namespace slate_ope
