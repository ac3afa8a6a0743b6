#pragma once

#include <charconv>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "okfeb/kernel.hpp"

namespace okfeb {

struct Sample {
  Vec x;
  std::optional<double> y;
};

struct ParseError : std::runtime_error {
  std::size_t line;
  ParseError(std::size_t line_no, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what), line(line_no) {}
};

namespace detail {

inline double parse_number(std::string_view tok, std::size_t line_no, const char* what) {
  std::string_view body = tok;
  if (!body.empty() && body.front() == '+') body.remove_prefix(1);  // from_chars rejects '+'
  double v = 0.0;
  const auto res = std::from_chars(body.data(), body.data() + body.size(), v);
  if (body.empty() || res.ec != std::errc{} || res.ptr != body.data() + body.size())
    throw ParseError(line_no, std::string("malformed ") + what + " '" + std::string(tok) + "'");
  return v;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

/// Parses one `<label> <idx>:<val> ...` line; indices are 1-based and must be
/// strictly increasing and <= dim. Absent indices densify to zero.
inline Sample parse_libsvm_line(std::string_view line, int dim, std::size_t line_no) {
  std::vector<std::string_view> toks;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != '\r') ++pos;
    if (pos > start) toks.push_back(line.substr(start, pos - start));
  }
  if (toks.empty()) throw ParseError(line_no, "empty line");

  Sample s;
  s.y = detail::parse_number(toks[0], line_no, "label");
  s.x = Vec::Zero(dim);
  long prev_idx = 0;
  for (std::size_t t = 1; t < toks.size(); ++t) {
    const auto tok = toks[t];
    const auto colon = tok.find(':');
    if (colon == std::string_view::npos)
      throw ParseError(line_no, "malformed feature token '" + std::string(tok) + "'");
    long idx = 0;
    const auto ir = std::from_chars(tok.data(), tok.data() + colon, idx);
    if (ir.ec != std::errc{} || ir.ptr != tok.data() + colon)
      throw ParseError(line_no, "malformed feature index '" + std::string(tok) + "'");
    if (idx < 1) throw ParseError(line_no, "feature index must be >= 1");
    if (idx > dim) throw ParseError(line_no, "feature index " + std::to_string(idx) +
                                                 " exceeds declared dimension " + std::to_string(dim));
    if (idx <= prev_idx) throw ParseError(line_no, "feature indices must be strictly increasing");
    prev_idx = idx;
    s.x[idx - 1] = detail::parse_number(tok.substr(colon + 1), line_no, "feature value");
  }
  return s;
}

inline std::vector<Sample> parse_libsvm(std::istream& in, int dim) {
  if (dim < 1) throw std::invalid_argument("libsvm parsing requires a declared dimension >= 1");
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    samples.push_back(parse_libsvm_line(line, dim, line_no));
  }
  return samples;
}

/// Canonical serialization: label then sparse nonzero entries, shortest
/// round-trip number formatting. parse(format(s)) == s exactly.
inline std::string format_libsvm_line(const Sample& s) {
  std::string out = detail::format_double(s.y.value_or(0.0));
  for (Eigen::Index i = 0; i < s.x.size(); ++i) {
    if (s.x[i] != 0.0) {
      out += ' ';
      out += std::to_string(i + 1);
      out += ':';
      out += detail::format_double(s.x[i]);
    }
  }
  return out;
}

inline void write_libsvm(std::ostream& out, const std::vector<Sample>& samples) {
  for (const auto& s : samples) out << format_libsvm_line(s) << '\n';
}

/// CSV: comma separated, '.' decimal, optional header (sniffed: first cell not
/// a number), label in the first column when `labeled`.
inline std::vector<Sample> parse_csv(std::istream& in, bool labeled) {
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw ParseError(line_no, "empty line");
    std::vector<std::string_view> cells;
    std::string_view lv = line;
    std::size_t pos = 0;
    while (true) {
      const auto comma = lv.find(',', pos);
      cells.push_back(lv.substr(pos, comma == std::string_view::npos ? lv.npos : comma - pos));
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (line_no == 1) {
      double probe = 0.0;
      const auto res = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), probe);
      if (res.ec != std::errc{} || res.ptr != cells[0].data() + cells[0].size()) continue;  // header
    }
    const std::size_t first_feat = labeled ? 1 : 0;
    if (cells.size() <= first_feat && labeled)
      throw ParseError(line_no, "row has no feature columns");
    Sample s;
    if (labeled) s.y = detail::parse_number(cells[0], line_no, "label");
    const Eigen::Index d = static_cast<Eigen::Index>(cells.size() - first_feat);
    if (dim < 0) dim = d;
    if (d != dim) throw ParseError(line_no, "inconsistent column count");
    s.x = Vec(d);
    for (Eigen::Index i = 0; i < d; ++i)
      s.x[i] = detail::parse_number(cells[first_feat + static_cast<std::size_t>(i)], line_no, "value");
    samples.push_back(std::move(s));
  }
  return samples;
}

inline void write_csv(std::ostream& out, const std::vector<Sample>& samples) {
  for (const auto& s : samples) {
    std::string row;
    if (s.y) row += detail::format_double(*s.y);
    for (Eigen::Index i = 0; i < s.x.size(); ++i) {
      if (!row.empty() || i > 0) row += ',';
      row += detail::format_double(s.x[i]);
    }
    out << row << '\n';
  }
}

namespace detail {
// Uniform point on the unit sphere via a normalized gaussian triple.
inline Vec unit_sphere_point(std::mt19937_64& rng, std::normal_distribution<double>& normal, int dim) {
  Vec u(dim);
  double norm = 0.0;
  do {
    for (int d = 0; d < dim; ++d) u[d] = normal(rng);
    norm = u.norm();
  } while (norm < 1e-12);
  return u / norm;
}
}  // namespace detail

/// Two equiprobable classes on concentric spheres: radius 1 for y=+1,
/// radius 2 for y=-1, plus N(0, sigma^2 I) noise. Deterministic per seed.
inline std::vector<Sample> gen_two_spheres(int n, double sigma, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_two_spheres requires n >= 1");
  if (sigma < 0.0) throw std::invalid_argument("gen_two_spheres requires sigma >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double y = unif(rng) < 0.5 ? 1.0 : -1.0;
    const double radius = y > 0 ? 1.0 : 2.0;
    Vec x = radius * detail::unit_sphere_point(rng, normal, 3);
    for (int d = 0; d < 3; ++d) x[d] += sigma * normal(rng);
    samples.push_back({std::move(x), y});
  }
  return samples;
}

/// First n/2 samples on the spheroid (x1/3)^2 + x2^2 + x3^2 = 1, last n/2 on
/// x1^2 + (x2/3)^2 + x3^2 = 1; unlabeled. Points are axis-scaled uniform
/// sphere samples (the stretched measure, not surface-uniform).
inline std::vector<Sample> gen_dynamic_spheroids(int n, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("gen_dynamic_spheroids requires even n >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vec u = detail::unit_sphere_point(rng, normal, 3);
    if (i < n / 2)
      u[0] *= 3.0;
    else
      u[1] *= 3.0;
    samples.push_back({std::move(u), std::nullopt});
  }
  return samples;
}

struct StandardizeReport {
  Vec mean;
  Vec scale;                        // divisor applied after centering (1 where skipped)
  std::vector<int> zero_variance;   // coordinates left unscaled
};

/// Two-pass standardization to zero mean, unit variance per coordinate.
/// Zero-variance coordinates are left untouched and reported.
inline StandardizeReport standardize_two_pass(std::vector<Sample>& samples) {
  if (samples.empty()) return {Vec(), Vec(), {}};
  const Eigen::Index dim = samples.front().x.size();
  Vec mean = Vec::Zero(dim);
  for (const auto& s : samples) mean += s.x;
  mean /= static_cast<double>(samples.size());
  Vec var = Vec::Zero(dim);
  for (const auto& s : samples) var += (s.x - mean).cwiseAbs2();
  var /= static_cast<double>(samples.size());
  StandardizeReport rep{mean, Vec::Ones(dim), {}};
  for (Eigen::Index d = 0; d < dim; ++d) {
    if (var[d] > 0.0)
      rep.scale[d] = std::sqrt(var[d]);
    else
      rep.zero_variance.push_back(static_cast<int>(d));
  }
  for (auto& s : samples) {
    for (Eigen::Index d = 0; d < dim; ++d)
      if (var[d] > 0.0) s.x[d] = (s.x[d] - mean[d]) / rep.scale[d];
  }
  return rep;
}

/// Online (Welford) standardizer; estimates are approximate early in the
/// stream and converge to the batch statistics.
class RunningStandardizer {
 public:
  explicit RunningStandardizer(int dim)
      : count_(0), mean_(Vec::Zero(dim)), m2_(Vec::Zero(dim)) {}

  Vec transform(const Vec& x) {
    ++count_;
    const Vec delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(x - mean_);
    Vec z = x - mean_;
    if (count_ > 1) {
      const Vec var = m2_ / static_cast<double>(count_);
      for (Eigen::Index d = 0; d < z.size(); ++d)
        if (var[d] > 0.0) z[d] /= std::sqrt(var[d]);
    }
    return z;
  }

  std::int64_t count() const { return count_; }
  const Vec& mean() const { return mean_; }
  Vec variance() const { return count_ > 0 ? Vec(m2_ / static_cast<double>(count_)) : m2_; }

 private:
  std::int64_t count_;
  Vec mean_;
  Vec m2_;
};

}  // namespace okfeb
