#include "shallom/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "shallom/errors.hpp"

namespace shallom {

namespace {

std::string_view trim(std::string_view s) {
  constexpr std::string_view kSpace = " \t\r\n";
  const auto first = s.find_first_not_of(kSpace);
  if (first == std::string_view::npos) return {};
  return s.substr(first, s.find_last_not_of(kSpace) - first + 1);
}

template <typename T>
T parse_number(std::string_view text, const std::string& key) {
  text = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ConfigError("invalid value '" + std::string(text) + "' for '" + key + "'");
  return value;
}

template <typename T>
std::vector<T> parse_list(std::string_view text, const std::string& key) {
  std::vector<T> values;
  while (true) {
    const auto comma = text.find(',');
    values.push_back(parse_number<T>(text.substr(0, comma), key));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return values;
}

constexpr const char* kHyperKeys[] = {"d",          "k",       "epochs",         "batch_size",
                                      "dropout_rate", "l2_coefficient", "learning_rate", "seed"};

}  // namespace

KeyValues parse_key_values(std::istream& in, const std::string& source_name) {
  KeyValues values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError(source_name, line_no, "expected 'key = value'");
    const auto key = std::string(trim(body.substr(0, eq)));
    if (key.empty()) throw ParseError(source_name, line_no, "empty key");
    if (!values.emplace(key, std::string(trim(body.substr(eq + 1)))).second)
      throw ParseError(source_name, line_no, "duplicate key '" + key + "'");
  }
  return values;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  return parse_key_values(in, path.string());
}

Hyperparams apply_hyperparams(Hyperparams h, const KeyValues& values) {
  for (const auto& [key, value] : values) {
    if (key == "d") h.d = parse_number<std::int64_t>(value, key);
    else if (key == "k") h.k = parse_number<std::int64_t>(value, key);
    else if (key == "epochs") h.epochs = parse_number<std::int64_t>(value, key);
    else if (key == "batch_size") h.batch_size = parse_number<std::int64_t>(value, key);
    else if (key == "dropout_rate") h.dropout_rate = parse_number<double>(value, key);
    else if (key == "l2_coefficient") h.l2_coefficient = parse_number<double>(value, key);
    else if (key == "learning_rate") h.learning_rate = parse_number<double>(value, key);
    else if (key == "seed") h.seed = parse_number<std::uint64_t>(value, key);
  }
  return h;
}

void check_known_keys(const KeyValues& values, const std::string& source_name) {
  for (const auto& [key, value] : values) {
    const auto known = [&](const auto& keys) {
      return std::any_of(std::begin(keys), std::end(keys), [&](const char* k) { return key == k; });
    };
    if (!known(kHyperKeys) && !known(kRunKeys)) throw ConfigError(source_name + ": unknown key '" + key + "'");
  }
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

std::string format_hyperparams(const Hyperparams& h) {
  std::ostringstream out;
  out << "d = " << h.d << '\n'
      << "k = " << h.k << '\n'
      << "epochs = " << h.epochs << '\n'
      << "batch_size = " << h.batch_size << '\n'
      << "dropout_rate = " << format_double(h.dropout_rate) << '\n'
      << "l2_coefficient = " << format_double(h.l2_coefficient) << '\n'
      << "learning_rate = " << format_double(h.learning_rate) << '\n'
      << "seed = " << h.seed << '\n';
  return out.str();
}

GridSpec parse_grid_spec(const KeyValues& values) {
  GridSpec grid;
  for (const auto& [key, value] : values) {
    if (key == "d") grid.d = parse_list<std::int64_t>(value, key);
    else if (key == "epochs") grid.epochs = parse_list<std::int64_t>(value, key);
    else if (key == "k_factor") grid.k_factor = parse_list<double>(value, key);
    else if (key == "batch_size") grid.batch_size = parse_list<std::int64_t>(value, key);
    else if (key == "dropout_rate") grid.dropout_rate = parse_list<double>(value, key);
    else if (key == "l2_coefficient") grid.l2_coefficient = parse_list<double>(value, key);
    else if (key == "learning_rate") grid.learning_rate = parse_list<double>(value, key);
    else if (key == "seed") grid.seed = parse_number<std::uint64_t>(value, key);
    else throw ConfigError("unknown grid key '" + key + "'");
  }
  for (const auto& h : grid.enumerate()) h.validate();
  return grid;
}

std::string grid_csv_header() {
  return "d,k,epochs,batch_size,dropout_rate,l2_coefficient,learning_rate,seed,valid_hits1,runtime_seconds,status";
}

std::string grid_csv_row(const GridRecord& r) {
  const auto& h = r.hyper;
  std::ostringstream out;
  out << h.d << ',' << h.k << ',' << h.epochs << ',' << h.batch_size << ',' << format_double(h.dropout_rate) << ','
      << format_double(h.l2_coefficient) << ',' << format_double(h.learning_rate) << ',' << h.seed << ','
      << (r.valid_hits1 ? format_double(*r.valid_hits1) : std::string()) << ','
      << format_double(r.runtime_seconds) << ',';
  if (r.error.empty()) {
    out << "ok";
  } else {
    // Quote for CSV; embedded quotes doubled.
    std::string quoted;
    for (char c : r.error) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
    out << "\"error: " << quoted << '"';
  }
  return out.str();
}

}  // namespace shallom
