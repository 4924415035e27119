#pragma once

// Labelled feature datasets: synthetic grouped benchmark, speaker-style
// group splits, forget-set selection and CSV interchange.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fsu/error.hpp"
#include "fsu/model.hpp"
#include "fsu/rng.hpp"

namespace fsu {

struct Sample {
  std::vector<double> features;
  std::size_t label = 0;
  std::int64_t group = 0;  // speaker surrogate

  friend bool operator==(const Sample&, const Sample&) = default;
  friend auto operator<=>(const Sample&, const Sample&) = default;
};

/// Samples sharing one feature dimension and one class count.
class LabeledDataset {
 public:
  LabeledDataset(std::size_t feature_dim, std::size_t class_count)
      : feature_dim_(feature_dim), class_count_(class_count) {
    if (feature_dim == 0 || class_count == 0)
      throw ShapeError("dataset needs positive feature_dim and class_count");
  }

  void add(Sample s) {
    if (s.features.size() != feature_dim_)
      throw ShapeError("sample has " + std::to_string(s.features.size()) +
                       " features, dataset expects " + std::to_string(feature_dim_));
    if (s.label >= class_count_)
      throw LabelError("label " + std::to_string(s.label) + " out of range for " +
                       std::to_string(class_count_) + " classes");
    samples_.push_back(std::move(s));
  }

  std::size_t feature_dim() const noexcept { return feature_dim_; }
  std::size_t class_count() const noexcept { return class_count_; }
  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_.at(i); }

  ExampleRef example(std::size_t i) const {
    const Sample& s = samples_.at(i);
    return {s.features, s.label};
  }

  std::vector<ExampleRef> examples() const {
    std::vector<ExampleRef> out;
    out.reserve(samples_.size());
    for (const Sample& s : samples_) out.push_back({s.features, s.label});
    return out;
  }

  std::vector<std::int64_t> groups() const {
    std::set<std::int64_t> g;
    for (const Sample& s : samples_) g.insert(s.group);
    return {g.begin(), g.end()};
  }

  /// Same dimensions, no samples.
  LabeledDataset empty_like() const { return {feature_dim_, class_count_}; }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::size_t feature_dim_;
  std::size_t class_count_;
  std::vector<Sample> samples_;
};

/// Concatenation of two datasets with identical dimensions.
inline LabeledDataset concat(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.feature_dim() != b.feature_dim() || a.class_count() != b.class_count())
    throw ShapeError("cannot concatenate datasets of different shape");
  LabeledDataset out = a;
  for (const Sample& s : b.samples()) out.add(s);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

/// Gaussian class clusters with per-group offsets.
///
/// Class c has mean separation * e_c (one axis per class, remaining axes
/// zero). Each group draws one offset vector with std `group_std` that is
/// added to all of its samples; each sample adds isotropic noise with std
/// `within_std`. With `rotate` set, a seeded random orthogonal rotation is
/// applied to the whole feature space afterwards, so that class directions
/// spread over every coordinate. Distances are unchanged by the rotation.
struct SynthSpec {
  std::size_t class_count = 7;
  std::size_t group_count = 30;
  std::size_t samples_per_group_per_class = 4;
  std::size_t feature_dim = 16;
  double separation = 6.0;
  double within_std = 1.0;
  double group_std = 0.5;
  bool rotate = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (class_count < 2) throw ConfigError("synth: class_count must be >= 2");
    if (group_count < 3) throw ConfigError("synth: group_count must be >= 3");
    if (samples_per_group_per_class == 0) throw ConfigError("synth: samples_per_group_per_class must be >= 1");
    if (!(separation > 0 && within_std > 0 && group_std > 0))
      throw ConfigError("synth: separation and standard deviations must be positive");
    if (feature_dim < class_count)
      throw ShapeError("synth: feature_dim " + std::to_string(feature_dim) +
                       " < class_count " + std::to_string(class_count) +
                       "; class means need distinct axes");
  }
};

namespace detail {

// Haar-ish random orthogonal matrix from Gram-Schmidt on a Gaussian matrix.
inline std::vector<double> random_rotation(std::size_t d, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<double> q(d * d);
  for (double& v : q) v = n01(rng);
  for (std::size_t r = 0; r < d; ++r) {
    double* row = q.data() + r * d;
    for (std::size_t p = 0; p < r; ++p) {
      const double* prev = q.data() + p * d;
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += row[i] * prev[i];
      for (std::size_t i = 0; i < d; ++i) row[i] -= dot * prev[i];
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < d; ++i) norm += row[i] * row[i];
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < d; ++i) row[i] /= norm;
  }
  return q;
}

}  // namespace detail

inline LabeledDataset synth_generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t d = spec.feature_dim;
  Rng rng(spec.seed);
  std::normal_distribution<double> n01(0.0, 1.0);

  std::vector<double> rotation;
  if (spec.rotate) {
    Rng rot_rng(derive_seed(spec.seed, "rotation"));
    rotation = detail::random_rotation(d, rot_rng);
  }

  LabeledDataset ds(d, spec.class_count);
  for (std::size_t g = 0; g < spec.group_count; ++g) {
    std::vector<double> offset(d);
    for (double& v : offset) v = spec.group_std * n01(rng);
    for (std::size_t c = 0; c < spec.class_count; ++c) {
      for (std::size_t k = 0; k < spec.samples_per_group_per_class; ++k) {
        std::vector<double> x(d);
        for (std::size_t i = 0; i < d; ++i) x[i] = offset[i] + spec.within_std * n01(rng);
        x[c] += spec.separation;
        if (!rotation.empty()) {
          std::vector<double> y(d, 0.0);
          for (std::size_t r = 0; r < d; ++r)
            for (std::size_t i = 0; i < d; ++i) y[r] += rotation[r * d + i] * x[i];
          x = std::move(y);
        }
        ds.add({std::move(x), c, static_cast<std::int64_t>(g)});
      }
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  double train_fraction = 1.0 / 3.0;
  double val_fraction = 1.0 / 3.0;
  double test_fraction = 1.0 / 3.0;
  std::uint64_t seed = 0;

  void validate() const {
    for (double f : {train_fraction, val_fraction, test_fraction})
      if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
    if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9)
      throw ConfigError("split fractions must sum to 1");
  }
};

struct Splits {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

/// Assigns whole groups to train/val/test: seeded shuffle of the sorted
/// group ids, then cut by fraction. Each split receives at least one group.
inline Splits split_by_group(const LabeledDataset& ds, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::int64_t> groups = ds.groups();
  const std::size_t g = groups.size();
  if (g < 3) throw SplitError("need at least 3 groups to split, found " + std::to_string(g));

  Rng rng(spec.seed);
  std::shuffle(groups.begin(), groups.end(), rng);

  auto cut = [g](double f) {
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(f * static_cast<double>(g))),
                                   1, g - 2);
  };
  const std::size_t n_train = cut(spec.train_fraction);
  const std::size_t n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(spec.val_fraction * static_cast<double>(g))), 1,
      g - n_train - 1);

  std::map<std::int64_t, int> where;
  for (std::size_t i = 0; i < g; ++i) where[groups[i]] = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);

  Splits out{ds.empty_like(), ds.empty_like(), ds.empty_like()};
  for (const Sample& s : ds.samples()) {
    switch (where[s.group]) {
      case 0: out.train.add(s); break;
      case 1: out.val.add(s); break;
      default: out.test.add(s); break;
    }
  }
  return out;
}

struct ForgetSplit {
  LabeledDataset forget;
  LabeledDataset remain;
};

/// Uniform N-subset without replacement. Both outputs keep the original order.
inline ForgetSplit select_forget(const LabeledDataset& train, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw SplitError("forget count must be positive");
  if (n >= train.size())
    throw SplitError("forget count " + std::to_string(n) + " must be below the training size " +
                     std::to_string(train.size()));
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<bool> chosen(train.size(), false);
  for (std::size_t k = 0; k < n; ++k) chosen[idx[k]] = true;

  ForgetSplit out{train.empty_like(), train.empty_like()};
  for (std::size_t i = 0; i < train.size(); ++i) (chosen[i] ? out.forget : out.remain).add(train[i]);
  return out;
}

// ---------------------------------------------------------------------------
// CSV: header f0,...,f{d-1},label,group; one sample per row.

inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return {buf, static_cast<std::size_t>(n)};
}

inline void write_csv(std::ostream& os, const LabeledDataset& ds) {
  for (std::size_t i = 0; i < ds.feature_dim(); ++i) os << 'f' << i << ',';
  os << "label,group\n";
  for (const Sample& s : ds.samples()) {
    for (double v : s.features) os << format_double(v) << ',';
    os << s.label << ',' << s.group << '\n';
  }
}

inline void save_csv(const LabeledDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_csv(os, ds);
  if (!os) throw IoError("failed writing " + path);
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view s, std::size_t line, std::string_view what) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty())
    throw ParseError("bad " + std::string(what) + " '" + std::string(s) + "'", line);
  return v;
}

}  // namespace detail

/// Parses the CSV format. Labels must be below `class_count`.
inline LabeledDataset read_csv(std::istream& is, std::size_t class_count) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty file: missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_commas(line);
  if (header.size() < 3) throw ParseError("header needs at least one feature, label and group", 1);
  const std::size_t d = header.size() - 2;
  for (std::size_t i = 0; i < d; ++i)
    if (header[i] != "f" + std::to_string(i))
      throw ParseError("expected column 'f" + std::to_string(i) + "', found '" +
                       std::string(header[i]) + "'", 1);
  if (header[d] != "label" || header[d + 1] != "group")
    throw ParseError("last two columns must be 'label,group'", 1);

  LabeledDataset ds(d, class_count);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = detail::split_commas(line);
    if (cells.size() != d + 2)
      throw ParseError("expected " + std::to_string(d + 2) + " columns, found " +
                       std::to_string(cells.size()), lineno);
    Sample s;
    s.features.reserve(d);
    for (std::size_t i = 0; i < d; ++i) {
      const double v = detail::parse_number<double>(cells[i], lineno, "feature");
      if (!std::isfinite(v)) throw ParseError("non-finite feature", lineno);
      s.features.push_back(v);
    }
    s.label = detail::parse_number<std::size_t>(cells[d], lineno, "label");
    if (s.label >= class_count)
      throw ParseError("label " + std::to_string(s.label) + " >= class count " +
                       std::to_string(class_count), lineno);
    s.group = detail::parse_number<std::int64_t>(cells[d + 1], lineno, "group");
    ds.add(std::move(s));
  }
  return ds;
}

inline LabeledDataset load_csv(const std::string& path, std::size_t class_count) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  try {
    return read_csv(is, class_count);
  } catch (const ParseError& e) {
    throw e.with_context(path);
  }
}

}  // namespace fsu
