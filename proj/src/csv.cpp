#include "mebart/csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mebart/format.hpp"

namespace mebart {

bool is_binary_response(const std::vector<double>& y) {
  return !y.empty() && std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

void validate_for_fit(const ObservedDataset& data, bool need_sigma_e) {
  if (data.y.size() != data.n()) throw DataError("response has " + std::to_string(data.y.size()) + " values for " + std::to_string(data.n()) + " rows");
  if (data.p() == 0) throw DataError("dataset has no predictor columns");
  if (data.n() < 10) throw DataError("need at least 10 observations to fit, got " + std::to_string(data.n()));
  for (std::size_t i = 0; i < data.n(); ++i) {
    if (!std::isfinite(data.y[i])) throw DataError("non-finite response at row " + std::to_string(i + 1));
    for (std::size_t j = 0; j < data.p(); ++j)
      if (!std::isfinite(data.x_star(i, j)))
        throw DataError("non-finite predictor at row " + std::to_string(i + 1) + ", column " + std::to_string(j + 1));
  }
  if (!need_sigma_e) return;
  if (data.sigma_e.size() != data.p())
    throw DataError("measurement-error sd required for every predictor column (got " + std::to_string(data.sigma_e.size()) +
                    " for " + std::to_string(data.p()) + " columns); pass --sigma-e or a #sigma_e: header comment");
  for (std::size_t j = 0; j < data.p(); ++j)
    if (!(data.sigma_e[j] > 0.0)) throw DataError("measurement-error sd for column " + std::to_string(j + 1) + " must be positive");
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

namespace {

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::vector<double> parse_list(const std::string& text, const std::string& where) {
  std::vector<double> out;
  for (const auto& f : split_fields(text)) {
    double v;
    if (!parse_double(f, v)) throw DataError(where + ": '" + trim(f) + "' is not a number");
    out.push_back(v);
  }
  return out;
}

}  // namespace

ObservedDataset read_csv(std::istream& in, const std::string& source, const CsvOptions& opts) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  std::optional<std::vector<double>> comment_sigma;
  std::vector<std::vector<double>> rows;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line.front() == '#') {
      const std::string body = trim(line.substr(1));
      if (body.rfind("sigma_e:", 0) == 0) comment_sigma = parse_list(body.substr(8), source + ":" + std::to_string(line_no) + ": #sigma_e");
      continue;
    }
    if (header.empty()) {
      for (auto& f : split_fields(line)) header.push_back(trim(f));
      for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j].empty()) throw DataError(source + ":" + std::to_string(line_no) + ": empty name for column " + std::to_string(j + 1));
        if (std::count(header.begin(), header.end(), header[j]) > 1) throw DataError(source + ": duplicate column '" + header[j] + "'");
      }
      continue;
    }
    const auto fields = split_fields(line);
    const std::size_t row = rows.size() + 1;
    if (fields.size() != header.size())
      throw DataError(source + ":" + std::to_string(line_no) + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(header.size()));
    std::vector<double> vals(fields.size());
    for (std::size_t j = 0; j < fields.size(); ++j) {
      const std::string where = source + ":" + std::to_string(line_no) + ": row " + std::to_string(row) + ", column '" + header[j] + "'";
      if (trim(fields[j]).empty()) throw DataError(where + ": missing value");
      if (!parse_double(fields[j], vals[j])) throw DataError(where + ": '" + trim(fields[j]) + "' is not a number");
      if (!std::isfinite(vals[j])) throw DataError(where + ": non-finite value");
    }
    rows.push_back(std::move(vals));
  }
  if (header.empty()) throw DataError(source + ": no header row");

  std::ptrdiff_t y_col = -1, f_col = -1;
  std::vector<std::size_t> x_cols;
  std::vector<std::pair<std::string, std::size_t>> x_true_cols;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string& h = header[j];
    if (h == "y") y_col = static_cast<std::ptrdiff_t>(j);
    else if (h == "oracle_f_true") f_col = static_cast<std::ptrdiff_t>(j);
    else if (h.rfind("oracle_x_true_", 0) == 0) x_true_cols.emplace_back(h.substr(14), j);
    else if (h.rfind("oracle_", 0) == 0) throw DataError(source + ": unknown oracle column '" + h + "'");
    else x_cols.push_back(j);
  }
  if (y_col < 0 && opts.require_y) throw DataError(source + ": no 'y' column");
  if (x_cols.empty()) throw DataError(source + ": no predictor columns");

  ObservedDataset d;
  const std::size_t n = rows.size();
  d.x_star = Matrix<double>(n, x_cols.size());
  for (std::size_t j : x_cols) d.x_names.push_back(header[j]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < x_cols.size(); ++j) d.x_star(i, j) = rows[i][x_cols[j]];
  if (y_col >= 0) {
    d.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.y[i] = rows[i][static_cast<std::size_t>(y_col)];
    d.binary = is_binary_response(d.y);
  }
  if (f_col >= 0) {
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = rows[i][static_cast<std::size_t>(f_col)];
    d.f_true = std::move(f);
  }
  if (!x_true_cols.empty()) {
    Matrix<double> xt(n, x_cols.size());
    for (std::size_t j = 0; j < x_cols.size(); ++j) {
      auto it = std::find_if(x_true_cols.begin(), x_true_cols.end(), [&](const auto& c) { return c.first == d.x_names[j]; });
      if (it == x_true_cols.end()) throw DataError(source + ": missing oracle_x_true_" + d.x_names[j]);
      for (std::size_t i = 0; i < n; ++i) xt(i, j) = rows[i][it->second];
    }
    if (x_true_cols.size() != x_cols.size()) throw DataError(source + ": oracle_x_true columns do not match predictors");
    d.x_true = std::move(xt);
  }

  const auto& sig = opts.sigma_e ? opts.sigma_e : comment_sigma;
  if (sig) {
    if (sig->size() == 1) d.sigma_e.assign(d.p(), sig->front());
    else if (sig->size() == d.p()) d.sigma_e = *sig;
    else throw DataError(source + ": sigma_e has " + std::to_string(sig->size()) + " values for " + std::to_string(d.p()) + " predictors");
    for (double s : d.sigma_e)
      if (!(s >= 0.0) || !std::isfinite(s)) throw DataError(source + ": sigma_e values must be finite and non-negative");
  }
  return d;
}

ObservedDataset load_csv(const std::string& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_csv(in, path, opts);
}

void write_csv(std::ostream& out, const ObservedDataset& d, const ScenarioSpec* scenario) {
  std::vector<std::string> names = d.x_names;
  for (std::size_t j = names.size(); j < d.p(); ++j) names.push_back("x" + std::to_string(j + 1));
  if (scenario) {
    out << "#scenario: " << to_string(scenario->function) << '\n';
    out << "#mu_x: " << format_double(scenario->mu_x) << '\n';
    out << "#sigma_x: " << format_double(scenario->sigma_x) << '\n';
    out << "#sigma_y: " << format_double(scenario->sigma_y) << '\n';
  }
  if (!d.sigma_e.empty()) {
    out << "#sigma_e: ";
    for (std::size_t j = 0; j < d.sigma_e.size(); ++j) out << (j ? "," : "") << format_double(d.sigma_e[j]);
    out << '\n';
  }
  const bool has_y = !d.y.empty();
  for (std::size_t j = 0; j < d.p(); ++j) out << (j ? "," : "") << names[j];
  if (has_y) out << ",y";
  if (d.x_true)
    for (std::size_t j = 0; j < d.p(); ++j) out << ",oracle_x_true_" << names[j];
  if (d.f_true) out << ",oracle_f_true";
  out << '\n';
  for (std::size_t i = 0; i < d.n(); ++i) {
    for (std::size_t j = 0; j < d.p(); ++j) out << (j ? "," : "") << format_double(d.x_star(i, j));
    if (has_y) out << ',' << format_double(d.y[i]);
    if (d.x_true)
      for (std::size_t j = 0; j < d.p(); ++j) out << ',' << format_double((*d.x_true)(i, j));
    if (d.f_true) out << ',' << format_double((*d.f_true)[i]);
    out << '\n';
  }
}

void save_csv(const std::string& path, const ObservedDataset& d, const ScenarioSpec* scenario) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_csv(out, d, scenario);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace mebart
