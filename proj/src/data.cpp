#include "gpcal/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gpcal {

Dataset gen_synthetic(int n, RngStream& rng) {
  if (n < 2) throw std::invalid_argument("gen_synthetic: n must be >= 2");
  Dataset ds;
  ds.features.resize(n, 1);
  ds.targets.resize(n);
  const double noise_sd = std::sqrt(2.0);
  for (int i = 0; i < n; ++i) {
    const double x = -10.0 + 50.0 * rng.uniform();
    const bool sloped = rng.uniform() < 0.5;
    const double eps = noise_sd * rng.normal();
    ds.features(i, 0) = x;
    ds.targets[i] = (sloped ? 0.5 * x : 0.0) + eps;
  }
  return ds;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // Trim surrounding whitespace.
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string{}
                                         : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw std::invalid_argument("csv: malformed number '" + s + "' at line " +
                                std::to_string(line_no));
  }
  return v;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("csv: cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.size() < 2) {
    throw std::invalid_argument("csv: " + path + " has no data rows");
  }
  const auto header = split_line(lines[0]);
  if (header.size() < 2) {
    throw std::invalid_argument("csv: need at least one feature and a target column");
  }
  const std::size_t cols = header.size();
  const std::size_t n = lines.size() - 1;
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols - 1));
  ds.targets.resize(static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < n; ++r) {
    const auto fields = split_line(lines[r + 1]);
    if (fields.size() != cols) {
      throw std::invalid_argument("csv: wrong field count at line " +
                                  std::to_string(r + 2));
    }
    for (std::size_t c = 0; c + 1 < cols; ++c) {
      ds.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          parse_double(fields[c], r + 2);
    }
    ds.targets[static_cast<Eigen::Index>(r)] = parse_double(fields[cols - 1], r + 2);
  }
  validate_dataset(ds);
  return ds;
}

std::pair<std::vector<GaussianPrediction>, Eigen::VectorXd> load_predictions_csv(
    const std::string& path) {
  const auto lines = read_lines(path);
  if (lines.size() < 2) {
    throw std::invalid_argument("csv: " + path + " has no data rows");
  }
  const auto header = split_line(lines[0]);
  int c_mu = -1, c_var = -1, c_y = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "mu") c_mu = static_cast<int>(c);
    if (header[c] == "var") c_var = static_cast<int>(c);
    if (header[c] == "y") c_y = static_cast<int>(c);
  }
  if (c_mu < 0 || c_var < 0 || c_y < 0) {
    throw std::invalid_argument("csv: predictions file needs mu, var, y columns");
  }
  std::vector<GaussianPrediction> preds;
  std::vector<double> ys;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto fields = split_line(lines[r]);
    if (fields.size() != header.size()) {
      throw std::invalid_argument("csv: wrong field count at line " +
                                  std::to_string(r + 1));
    }
    const double mu = parse_double(fields[static_cast<std::size_t>(c_mu)], r + 1);
    const double var = parse_double(fields[static_cast<std::size_t>(c_var)], r + 1);
    const double y = parse_double(fields[static_cast<std::size_t>(c_y)], r + 1);
    if (!(var > 0.0)) {
      throw std::invalid_argument("csv: nonpositive var at line " +
                                  std::to_string(r + 1));
    }
    preds.emplace_back(mu, var);
    ys.push_back(y);
  }
  Eigen::VectorXd targets(static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < ys.size(); ++i) {
    targets[static_cast<Eigen::Index>(i)] = ys[i];
  }
  return {std::move(preds), std::move(targets)};
}

namespace {

void write_double(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.write(buf, res.ptr - buf);
}

}  // namespace

void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("csv: cannot write " + path);
  for (Eigen::Index c = 0; c < ds.features.cols(); ++c) out << 'x' << c << ',';
  out << "y\n";
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) {
      write_double(out, ds.features(r, c));
      out << ',';
    }
    write_double(out, ds.targets[r]);
    out << '\n';
  }
}

void write_predictions_csv(const std::vector<GaussianPrediction>& preds,
                           const Eigen::VectorXd& targets,
                           const std::string& path) {
  if (preds.size() != static_cast<std::size_t>(targets.size())) {
    throw std::invalid_argument("write_predictions_csv: size mismatch");
  }
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("csv: cannot write " + path);
  out << "mu,var,y\n";
  for (std::size_t i = 0; i < preds.size(); ++i) {
    write_double(out, preds[i].mu);
    out << ',';
    write_double(out, preds[i].var);
    out << ',';
    write_double(out, targets[static_cast<Eigen::Index>(i)]);
    out << '\n';
  }
}

}  // namespace gpcal
