#ifndef SHALLOM_CONFIG_HPP
#define SHALLOM_CONFIG_HPP

#include <filesystem>
#include <istream>
#include <map>
#include <string>

#include "shallom/training.hpp"

namespace shallom {

using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; blank lines and lines starting with '#' are ignored.
KeyValues parse_key_values(std::istream& in, const std::string& source_name = "<stream>");
KeyValues read_key_values(const std::filesystem::path& path);

/// Overwrites the fields of `base` named in `values`. Keys that are not
/// hyperparameters are left for the caller; see kRunKeys.
Hyperparams apply_hyperparams(Hyperparams base, const KeyValues& values);

/// Keys accepted in a training config besides the hyperparameters.
inline constexpr const char* kRunKeys[] = {"oov_policy", "threads", "deterministic"};

/// Rejects keys that are neither hyperparameters nor run keys.
void check_known_keys(const KeyValues& values, const std::string& source_name);

/// Config text that apply_hyperparams reads back to an identical value.
std::string format_hyperparams(const Hyperparams& hyper);

/// Grid file: the same keys with comma-separated candidate lists, plus
/// `k_factor` instead of `k`. Missing keys keep the default lists.
GridSpec parse_grid_spec(const KeyValues& values);

std::string grid_csv_header();
std::string grid_csv_row(const GridRecord& record);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace shallom

#endif  // SHALLOM_CONFIG_HPP
