#include "dpmine/runner/io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "dpmine/runner/config.hpp"

namespace dpmine::runner {

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void write_file_atomic(const std::filesystem::path &path, const std::string &content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error(ErrorCode::IoError, "short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

Index CsvTable::column(const std::string &name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end())
    throw Error(ErrorCode::SchemaError, source.string() + ": missing column '" + name + "'");
  return it - columns.begin();
}

namespace {

std::vector<std::string> split_keep_empty(const std::string &line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void schema_error(const std::filesystem::path &path, int line, const std::string &what) {
  throw Error(ErrorCode::SchemaError, path.string() + ":" + std::to_string(line) + ": " + what);
}

} // namespace

CsvTable read_csv(const std::filesystem::path &path, std::string_view expected_columns) {
  std::istringstream in(read_file(path));
  CsvTable t;
  t.source = path;
  std::string line;
  int line_no = 0;
  bool saw_schema = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      for (const auto &word : split(line.substr(1), ' ')) {
        const auto eq = word.find('=');
        if (eq == std::string::npos) continue;
        t.tags[word.substr(0, eq)] = word.substr(eq + 1);
      }
      if (!saw_schema) {
        if (t.tags.count("schema") == 0) schema_error(path, line_no, "first line must be '# schema=1'");
        if (t.tags["schema"] != std::to_string(kSchemaVersion))
          schema_error(path, line_no, "unsupported schema version " + t.tags["schema"]);
        saw_schema = true;
      }
      continue;
    }
    if (!saw_schema) schema_error(path, line_no, "missing '# schema=1' header");
    if (t.columns.empty()) {
      t.columns = split_keep_empty(line);
      if (!expected_columns.empty() && line != expected_columns)
        schema_error(path, line_no, "unexpected columns '" + line + "'");
      continue;
    }
    auto cells = split_keep_empty(line);
    if (cells.size() != t.columns.size())
      schema_error(path, line_no,
                   "expected " + std::to_string(t.columns.size()) + " cells, found " +
                       std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
    t.row_lines.push_back(line_no);
  }
  if (!saw_schema) schema_error(path, std::max(line_no, 1), "missing '# schema=1' header");
  if (t.columns.empty()) schema_error(path, std::max(line_no, 1), "missing column header");
  return t;
}

std::string csv_header(std::string_view columns,
                       const std::vector<std::pair<std::string, std::string>> &tags) {
  std::string out = "# schema=" + std::to_string(kSchemaVersion) + "\n";
  if (!tags.empty()) {
    out += "#";
    for (const auto &[k, v] : tags) out += " " + k + "=" + v;
    out += "\n";
  }
  out += std::string(columns) + "\n";
  return out;
}

std::string trace_csv(const TraceMeta &meta, const EstimateTrace &trace) {
  std::vector<std::pair<std::string, std::string>> tags{{"family", meta.family}};
  if (meta.truth) tags.emplace_back("truth", fmt(*meta.truth));
  std::string out = csv_header(kTraceColumns, tags);
  const std::string prefix = meta.run_id + "," + meta.estimator + "," + to_string(meta.bound) +
                             "," + to_string(meta.weighting) + "," + std::to_string(meta.dim) +
                             "," + std::to_string(meta.seed) + ",";
  for (std::size_t e = 0; e < trace.values.size(); ++e) {
    const double ms = e < trace.epoch_ms.size() ? trace.epoch_ms[e] : 0.0;
    out += prefix + std::to_string(e + 1) + "," + fmt(trace.values[e]) + "," + fmt(ms) + "\n";
  }
  return out;
}

namespace {

double parse_real(const CsvTable &t, std::size_t row, const std::string &col) {
  const std::string &cell = t.rows[row][static_cast<std::size_t>(t.column(col))];
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    schema_error(t.source, t.row_lines[row], "column '" + col + "' is not a number: '" + cell + "'");
  return v;
}

std::int64_t parse_int(const CsvTable &t, std::size_t row, const std::string &col) {
  const std::string &cell = t.rows[row][static_cast<std::size_t>(t.column(col))];
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    schema_error(t.source, t.row_lines[row], "column '" + col + "' is not an integer: '" + cell + "'");
  return v;
}

} // namespace

TraceFile read_trace_csv(const std::filesystem::path &path) {
  const CsvTable t = read_csv(path, kTraceColumns);
  TraceFile f;
  f.source = path;
  if (auto it = t.tags.find("family"); it != t.tags.end()) f.meta.family = it->second;
  if (auto it = t.tags.find("truth"); it != t.tags.end()) {
    try {
      f.meta.truth = std::stod(it->second);
    } catch (const std::exception &) {
      schema_error(path, 2, "truth tag is not a number");
    }
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto &row = t.rows[r];
    try {
      if (r == 0) {
        f.meta.run_id = row[0];
        f.meta.estimator = row[1];
        f.meta.bound = parse_bound(row[2]);
        f.meta.weighting = parse_weighting(row[3]);
        f.meta.dim = parse_int(t, r, "dim");
        f.meta.seed = static_cast<std::uint64_t>(parse_int(t, r, "seed"));
      } else if (row[0] != f.meta.run_id) {
        schema_error(path, t.row_lines[r], "mixed run ids in one trace file");
      }
    } catch (const Error &e) {
      if (e.code() == ErrorCode::SchemaError) throw;
      schema_error(path, t.row_lines[r], e.what());
    }
    if (parse_int(t, r, "epoch") != static_cast<std::int64_t>(r + 1))
      schema_error(path, t.row_lines[r], "epochs must count up from 1");
    f.values.push_back(parse_real(t, r, "value"));
    f.epoch_ms.push_back(parse_real(t, r, "epoch_ms"));
  }
  if (f.values.empty()) schema_error(path, 3, "trace has no rows");
  return f;
}

std::string summary_row(const TraceMeta &meta, const TraceSummary &s, const std::string &status) {
  std::ostringstream out;
  out << meta.run_id << ',' << meta.estimator << ',' << to_string(meta.bound) << ','
      << to_string(meta.weighting) << ',' << meta.family << ',' << meta.dim << ',' << meta.seed
      << ',' << (meta.truth ? fmt(*meta.truth) : "") << ',' << fmt(s.final_window_mean) << ','
      << fmt(s.final_window_var) << ',' << fmt(s.full_var) << ',' << fmt(s.abs_bias_vs_truth)
      << ',' << (s.epochs_to_band ? std::to_string(*s.epochs_to_band) : "") << ',' << status
      << '\n';
  return out.str();
}

std::string RunManifest::text() const {
  std::ostringstream out;
  out << "dpmine-manifest 1\n"
      << "command " << command << '\n'
      << "version " << version << '\n'
      << "started " << started << '\n'
      << "finished " << finished << '\n'
      << "config-begin\n"
      << config << (config.empty() || config.back() == '\n' ? "" : "\n") << "config-end\n";
  for (const auto &r : runs) {
    out << "run " << r.run_id << " seed=" << r.seed << " status=" << r.status;
    if (!r.detail.empty()) out << " detail=" << sanitize_id(r.detail);
    out << '\n';
  }
  for (const auto &o : outputs) out << "output " << o << '\n';
  for (const auto &n : notes) out << "note " << n << '\n';
  return out.str();
}

RunManifest RunManifest::parse(std::string_view text, const std::string &origin) {
  RunManifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  bool in_config = false;
  auto fail = [&](const std::string &what) {
    throw Error(ErrorCode::SchemaError, origin + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "dpmine-manifest 1") fail("not a dpmine manifest");
      continue;
    }
    if (in_config) {
      if (line == "config-end")
        in_config = false;
      else
        m.config += line + "\n";
      continue;
    }
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    const std::string head = line.substr(0, sp);
    const std::string rest = sp == std::string::npos ? "" : line.substr(sp + 1);
    if (head == "command") m.command = rest;
    else if (head == "version") m.version = rest;
    else if (head == "started") m.started = rest;
    else if (head == "finished") m.finished = rest;
    else if (head == "config-begin") in_config = true;
    else if (head == "output") m.outputs.push_back(rest);
    else if (head == "note") m.notes.push_back(rest);
    else if (head == "run") {
      RunRecord r;
      const auto words = split(rest, ' ');
      if (words.empty()) fail("run line without id");
      r.run_id = words[0];
      for (std::size_t i = 1; i < words.size(); ++i) {
        const auto eq = words[i].find('=');
        if (eq == std::string::npos) fail("malformed run field '" + words[i] + "'");
        const auto key = words[i].substr(0, eq);
        const auto val = words[i].substr(eq + 1);
        if (key == "seed") r.seed = std::stoull(val);
        else if (key == "status") r.status = val;
        else if (key == "detail") r.detail = val;
      }
      m.runs.push_back(std::move(r));
    } else {
      fail("unknown manifest entry '" + head + "'");
    }
  }
  if (line_no == 0) fail("empty manifest");
  if (in_config) fail("unterminated config block");
  return m;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sanitize_id(std::string_view text) {
  std::string out(text);
  for (char &c : out)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  return out;
}

namespace {

constexpr double kWidth = 720.0;
constexpr double kHeight = 440.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 160.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char *const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string &s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;
  [[nodiscard]] double px(double x) const {
    return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight);
  }
  [[nodiscard]] double py(double y) const {
    return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom);
  }
};

Frame make_frame(double x0, double x1, double y0, double y1) {
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pad = 0.05 * (y1 - y0);
  return {x0, x1, y0 - pad, y1 + pad};
}

void open_svg(std::ostringstream &out, const std::string &title) {
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\""
      << " font-size=\"15\">" << escape(title) << "</text>\n";
}

void axes(std::ostringstream &out, const Frame &f, const std::string &xl, const std::string &yl) {
  const double l = kLeft, r = kWidth - kRight, t = kTop, b = kHeight - kBottom;
  out << "<path class=\"axes\" d=\"M" << l << ' ' << t << " L" << l << ' ' << b << " L" << r << ' '
      << b << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = f.x0 + (f.x1 - f.x0) * k / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * k / 4.0;
    out << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << b + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << num(xv)
        << "</text>\n";
    out << "<text x=\"" << l - 6 << "\" y=\"" << num(f.py(yv) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(yv)
        << "</text>\n";
  }
  out << "<text x=\"" << (l + r) / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(xl)
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << (t + b) / 2 << "\" transform=\"rotate(-90 16 " << (t + b) / 2
      << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(yl)
      << "</text>\n";
}

void legend_entry(std::ostringstream &out, int k, const std::string &label, const std::string &color) {
  const double x = kWidth - kRight + 12;
  const double y = kTop + 14 + 18 * k;
  out << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"10\" fill=\"" << color
      << "\"/>\n<text x=\"" << x + 18 << "\" y=\"" << y
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(label) << "</text>\n";
}

} // namespace

std::string line_chart_svg(const std::string &title, const std::vector<Series> &series,
                           std::optional<double> reference, const std::string &x_label,
                           const std::string &y_label) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto &s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (reference) {
    y0 = std::min(y0, *reference);
    y1 = std::max(y1, *reference);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1;
  if (!std::isfinite(y0)) y0 = 0, y1 = 1;
  const Frame f = make_frame(x0, x1, y0, y1);

  std::ostringstream out;
  open_svg(out, title);
  axes(out, f, x_label, y_label);
  int k = 0;
  std::vector<std::string> legend;
  for (const auto &s : series) {
    const std::string color = s.color.empty() ? kPalette[k % 8] : s.color;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (std::isfinite(s.y[i])) out << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << ' ';
    out << "\"><title>" << escape(s.label) << "</title></polyline>\n";
    ++k;
    // Series sharing a label share one legend entry.
    if (std::find(legend.begin(), legend.end(), s.label) != legend.end()) continue;
    legend_entry(out, static_cast<int>(legend.size()), s.label, color);
    legend.push_back(s.label);
  }
  if (reference) {
    out << "<line class=\"reference\" x1=\"" << kLeft << "\" x2=\"" << kWidth - kRight << "\" y1=\""
        << num(f.py(*reference)) << "\" y2=\"" << num(f.py(*reference))
        << "\" stroke=\"black\" stroke-dasharray=\"6 4\"/>\n";
    legend_entry(out, static_cast<int>(legend.size()), "truth = " + fmt(*reference), "black");
  }
  out << "</svg>\n";
  return out.str();
}

std::string scatter_svg(const std::string &title,
                        const std::vector<std::pair<std::string, FeatureSet>> &groups) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto &[label, pts] : groups)
    if (pts.rows() > 0) {
      x0 = std::min(x0, pts.col(0).minCoeff());
      x1 = std::max(x1, pts.col(0).maxCoeff());
      y0 = std::min(y0, pts.col(1).minCoeff());
      y1 = std::max(y1, pts.col(1).maxCoeff());
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  const Frame f = make_frame(x0, x1, y0, y1);

  std::ostringstream out;
  open_svg(out, title);
  axes(out, f, "PC1", "PC2");
  int k = 0;
  for (const auto &[label, pts] : groups) {
    const char *color = kPalette[k % 8];
    out << "<g fill=\"" << color << "\" fill-opacity=\"0.6\">\n";
    for (Index i = 0; i < pts.rows(); ++i)
      out << "<circle cx=\"" << num(f.px(pts(i, 0))) << "\" cy=\"" << num(f.py(pts(i, 1)))
          << "\" r=\"1.5\"/>\n";
    out << "</g>\n";
    legend_entry(out, k, label, color);
    ++k;
  }
  out << "</svg>\n";
  return out.str();
}

} // namespace dpmine::runner
