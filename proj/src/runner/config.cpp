#include "dpmine/runner/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace dpmine::runner {

namespace {

constexpr std::string_view kDefaults = R"(# dpmine defaults
[run]
seeds = 0-19
workers = 0  # 0: one per core

[dp]
concentration = 1
map_grid = 0.01,0.1,1,10,100
epsilon = 0.01
truncation_cap = 10000
truncation = 0
redraw_truncation = false

[critic]
hidden = 400,400,400
output = identity
learning_rate = 0.0002
derangement = false

[estimate]
family = sign_gaussian
noise_sd = 0.2
pmf = 0.4,0.1/0.1,0.4  # discrete_joint rows, '/' between rows
n = 16
dims = 1
epochs = 500
bounds = dv
weightings = dp,empirical
redraw_per_epoch = true
minibatch = 0
record_timing = false
window = 100
tol = 0.15

[dimsweep]
family = sign_gaussian
dims = 2,10,100,1000
epochs = 500
long_dim = 1000
long_epochs = 1500

[gendemo]
seeds = 0
n = 5000
epochs = 5000
max_atoms = 256
gp_lambda = 10
mi_coefficients = 1,1,1,1
bound = dv
sigmas = 2,5,10,20,40,80
latent = 100
sublatent = 10
samples = 1000
replications = 100
bins = 20
ablation = false
svg = true

[report]
window = 100
tol = 0.15
)";

std::string section_of(const std::string &key) { return key.substr(0, key.find('.')); }

[[noreturn]] void bad_value(const std::string &key, const std::string &value, const char *kind) {
  throw Error(ErrorCode::InvalidArgument,
              "config key '" + key + "' expects " + kind + ", got '" + value + "'");
}

} // namespace

std::string trim(std::string_view text) {
  const auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(sep, start);
    const auto piece = trim(text.substr(start, pos == std::string_view::npos ? text.npos : pos - start));
    if (!piece.empty()) out.push_back(piece);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

Config Config::parse(std::string_view text, const std::string &origin) {
  Config cfg;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw Error(ErrorCode::SchemaError, where + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::SchemaError, where + ": expected key = value");
    if (section.empty()) throw Error(ErrorCode::SchemaError, where + ": key outside any section");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorCode::SchemaError, where + ": empty key");
    cfg.entries_[section + "." + key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string());
}

void Config::merge(const Config &other) {
  for (const auto &[key, value] : other.entries_) {
    if (!has(key)) throw Error(ErrorCode::SchemaError, "unknown config key '" + key + "'");
    entries_[key] = value;
  }
}

std::string Config::str(const std::string &key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw Error(ErrorCode::SchemaError, "missing config key '" + key + "'");
  return it->second;
}

double Config::real(const std::string &key) const {
  const std::string v = str(key);
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception &) {
  }
  bad_value(key, v, "a number");
}

std::int64_t Config::integer(const std::string &key) const {
  const std::string v = str(key);
  std::int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

bool Config::flag(const std::string &key) const {
  const std::string v = str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::vector<double> Config::reals(const std::string &key) const {
  std::vector<double> out;
  for (const auto &piece : split(str(key), ',')) {
    Config one;
    one.set(key, piece);
    out.push_back(one.real(key));
  }
  return out;
}

std::vector<std::int64_t> Config::integers(const std::string &key) const {
  std::vector<std::int64_t> out;
  for (const auto &piece : split(str(key), ',')) {
    Config one;
    one.set(key, piece);
    out.push_back(one.integer(key));
  }
  return out;
}

std::vector<std::string> Config::words(const std::string &key) const {
  return split(str(key), ',');
}

std::string Config::dump() const {
  std::ostringstream out;
  std::string current;
  for (const auto &[key, value] : entries_) {
    const std::string sec = section_of(key);
    if (sec != current) {
      if (!current.empty()) out << '\n';
      out << '[' << sec << "]\n";
      current = sec;
    }
    out << key.substr(sec.size() + 1) << " = " << value << '\n';
  }
  return out.str();
}

const Config &default_config() {
  static const Config cfg = Config::parse(kDefaults, "<defaults>");
  return cfg;
}

Config load_with_defaults(const std::filesystem::path &path) {
  Config cfg = default_config();
  if (!path.empty()) cfg.merge(Config::load(path));
  return cfg;
}

std::vector<std::uint64_t> parse_seed_list(const std::string &text) {
  std::vector<std::uint64_t> out;
  for (const auto &piece : split(text, ',')) {
    const auto dash = piece.find('-');
    auto number = [&](const std::string &s) {
      std::uint64_t v = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error(ErrorCode::InvalidArgument, "bad seed list entry '" + piece + "'");
      return v;
    };
    if (dash == std::string::npos) {
      out.push_back(number(piece));
    } else {
      const auto lo = number(trim(piece.substr(0, dash)));
      const auto hi = number(trim(piece.substr(dash + 1)));
      if (hi < lo) throw Error(ErrorCode::InvalidArgument, "descending seed range '" + piece + "'");
      for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "seed list is empty");
  return out;
}

} // namespace dpmine::runner
