#pragma once

// Synthetic classification data with a controllable spurious link between a
// nuisance block (driven by domain) and the label (driven by class).
//
// Each sample is [relevant | nuisance]. The relevant block is
// 2 e_class + N(0, sigma^2 I); the nuisance block is 2 e_domain + N(0, sigma^2 I).
// Only the per-class domain frequencies couple the two blocks.

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "reweight/common.hpp"
#include "reweight/io.hpp"
#include "reweight/model.hpp"

namespace reweight::data {

enum class Setting { classic, unbalanced, flexible, adversarial };

inline std::string to_string(Setting s) {
  switch (s) {
    case Setting::classic: return "classic";
    case Setting::unbalanced: return "unbalanced";
    case Setting::flexible: return "flexible";
    case Setting::adversarial: return "adversarial";
  }
  return "?";
}

inline Setting parse_setting(const std::string& s) {
  if (s == "classic") return Setting::classic;
  if (s == "unbalanced") return Setting::unbalanced;
  if (s == "flexible") return Setting::flexible;
  if (s == "adversarial") return Setting::adversarial;
  throw InvalidArgument("unknown setting '" + s + "'");
}

struct ShiftConfig {
  Setting setting = Setting::adversarial;
  int n_classes = 3;
  int n_domains = 3;
  double dominant_ratio = 0.9;
  int n_train = 1536;
  int n_test = 1536;
  int relevant_dim = 4;
  int nuisance_dim = 4;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;
  // Nuisance prototype gets a random sign per sample, so the domain is only
  // visible through squared nuisance coordinates.
  bool signed_nuisance = false;

  /// Domain ids used anywhere; unbalanced adds one held-out test domain.
  int total_domains() const { return setting == Setting::unbalanced ? n_domains + 1 : n_domains; }
  int input_dim() const { return relevant_dim + nuisance_dim; }

  void validate() const {
    require(n_classes >= 2, "ShiftConfig: n_classes must be >= 2");
    require(n_domains >= 2, "ShiftConfig: n_domains must be >= 2");
    require(dominant_ratio >= 1.0 / n_domains - 1e-12 && dominant_ratio < 1.0,
            "ShiftConfig: dominant_ratio must lie in [1/D, 1)");
    require(n_train >= n_classes && n_test >= 1, "ShiftConfig: sample counts too small");
    require(relevant_dim >= n_classes, "ShiftConfig: relevant_dim must be >= n_classes");
    require(nuisance_dim >= total_domains(), "ShiftConfig: nuisance_dim too small for the domain count");
    require(noise_sigma > 0.0, "ShiftConfig: noise_sigma must be positive");
    if (setting == Setting::adversarial)
      require(n_domains >= n_classes, "ShiftConfig: adversarial setting needs n_domains >= n_classes");
  }
};

struct LabeledSplit {
  Batch batch;
  std::vector<int> domains;

  Eigen::Index size() const noexcept { return batch.size(); }
};

struct Provenance {
  ShiftConfig config;
  std::vector<int> train_dominant;  // per class; -1 when the split is uniform
  std::vector<int> test_dominant;
  double bayes_relevant_accuracy = 0.0;
};

struct ShiftDataset {
  LabeledSplit train;
  LabeledSplit test;
  Provenance provenance;
};

/// Accuracy of the nearest-prototype rule on the relevant block:
/// integral of phi(z) Phi(z + 2/sigma)^(C-1) dz (composite Simpson).
inline double bayes_relevant_accuracy(int n_classes, double noise_sigma) {
  const double shift = 2.0 / noise_sigma;
  const int intervals = 4000;
  const double lo = -12.0, hi = 12.0, h = (hi - lo) / intervals;
  auto f = [&](double z) {
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-(z + shift) / std::numbers::sqrt2);
    return pdf * std::pow(cdf, n_classes - 1);
  };
  double acc = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return acc * h / 3.0;
}

namespace detail {

// Dominant domain with probability `ratio`, otherwise uniform over the rest.
inline int draw_domain(std::mt19937_64& rng, int dominant, double ratio, const std::vector<int>& candidates) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (dominant >= 0 && u(rng) < ratio) return dominant;
  std::vector<int> rest;
  for (int d : candidates)
    if (d != dominant) rest.push_back(d);
  std::uniform_int_distribution<std::size_t> pick(0, rest.size() - 1);
  return rest[pick(rng)];
}

inline LabeledSplit sample_split(std::mt19937_64& rng, const ShiftConfig& cfg, int n, const std::vector<int>& dominant,
                                 const std::vector<std::vector<int>>& candidates, bool ratio_applies) {
  LabeledSplit split;
  split.batch.inputs = Matrix::Zero(n, cfg.input_dim());
  split.batch.labels.resize(static_cast<std::size_t>(n));
  split.domains.resize(static_cast<std::size_t>(n));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < n; ++i) {
    const int c = i % cfg.n_classes;
    const auto cs = static_cast<std::size_t>(c);
    const double ratio = ratio_applies ? cfg.dominant_ratio : 0.0;
    const int d = draw_domain(rng, ratio_applies ? dominant[cs] : -1, ratio, candidates[cs]);
    split.batch.labels[static_cast<std::size_t>(i)] = c;
    split.domains[static_cast<std::size_t>(i)] = d;
    for (int j = 0; j < cfg.relevant_dim; ++j)
      split.batch.inputs(i, j) = (j == c ? 2.0 : 0.0) + cfg.noise_sigma * normal(rng);
    const double sign = cfg.signed_nuisance ? (coin(rng) ? 1.0 : -1.0) : 1.0;
    for (int j = 0; j < cfg.nuisance_dim; ++j)
      split.batch.inputs(i, cfg.relevant_dim + j) = (j == d ? 2.0 * sign : 0.0) + cfg.noise_sigma * normal(rng);
  }
  return split;
}

}  // namespace detail

inline ShiftDataset generate(const ShiftConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const int C = cfg.n_classes;
  const int D = cfg.n_domains;
  std::vector<int> all(static_cast<std::size_t>(D));
  std::iota(all.begin(), all.end(), 0);
  const std::vector<std::vector<int>> every_class(static_cast<std::size_t>(C), all);

  ShiftDataset ds;
  ds.provenance.config = cfg;
  ds.provenance.bayes_relevant_accuracy = bayes_relevant_accuracy(C, cfg.noise_sigma);
  auto& train_dom = ds.provenance.train_dominant;
  auto& test_dom = ds.provenance.test_dominant;
  train_dom.assign(static_cast<std::size_t>(C), -1);
  test_dom.assign(static_cast<std::size_t>(C), -1);

  switch (cfg.setting) {
    case Setting::classic:
      ds.train = detail::sample_split(rng, cfg, cfg.n_train, train_dom, every_class, false);
      ds.test = detail::sample_split(rng, cfg, cfg.n_test, test_dom, every_class, false);
      break;
    case Setting::unbalanced: {
      // D source domains share one dominant domain; domain D is held out for test.
      std::uniform_int_distribution<int> pick(0, D - 1);
      train_dom.assign(static_cast<std::size_t>(C), pick(rng));
      test_dom.assign(static_cast<std::size_t>(C), D);
      ds.train = detail::sample_split(rng, cfg, cfg.n_train, train_dom, every_class, true);
      const std::vector<std::vector<int>> held_out(static_cast<std::size_t>(C), std::vector<int>{D});
      ds.test = detail::sample_split(rng, cfg, cfg.n_test, std::vector<int>(static_cast<std::size_t>(C), -1), held_out,
                                     false);
      break;
    }
    case Setting::flexible: {
      std::uniform_int_distribution<int> pick(0, D - 1);
      for (auto& d : train_dom) d = pick(rng);
      ds.train = detail::sample_split(rng, cfg, cfg.n_train, train_dom, every_class, true);
      std::vector<std::vector<int>> test_candidates(static_cast<std::size_t>(C));
      for (int c = 0; c < C; ++c)
        for (int d : all)
          if (d != train_dom[static_cast<std::size_t>(c)]) test_candidates[static_cast<std::size_t>(c)].push_back(d);
      ds.test = detail::sample_split(rng, cfg, cfg.n_test, test_dom, test_candidates, false);
      break;
    }
    case Setting::adversarial: {
      // Class c trains mostly on domain c; its test split is dominated by the
      // training domain of class (c + 1) mod C.
      for (int c = 0; c < C; ++c) train_dom[static_cast<std::size_t>(c)] = c;
      for (int c = 0; c < C; ++c) test_dom[static_cast<std::size_t>(c)] = train_dom[static_cast<std::size_t>((c + 1) % C)];
      ds.train = detail::sample_split(rng, cfg, cfg.n_train, train_dom, every_class, true);
      ds.test = detail::sample_split(rng, cfg, cfg.n_test, test_dom, every_class, true);
      break;
    }
  }
  return ds;
}

/// Per class: fraction of its samples that fall in its most frequent domain.
inline std::vector<double> empirical_spuriousness(const LabeledSplit& split, int n_classes) {
  std::vector<std::map<int, int>> counts(static_cast<std::size_t>(n_classes));
  std::vector<int> totals(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < split.domains.size(); ++i) {
    const int c = split.batch.labels[i];
    require(c >= 0 && c < n_classes, "empirical_spuriousness: label out of range");
    ++counts[static_cast<std::size_t>(c)][split.domains[i]];
    ++totals[static_cast<std::size_t>(c)];
  }
  std::vector<double> out;
  for (int c = 0; c < n_classes; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    require(totals[cs] > 0, "empirical_spuriousness: class " + std::to_string(c) + " is empty");
    int modal = 0;
    for (const auto& [d, k] : counts[cs]) modal = std::max(modal, k);
    out.push_back(static_cast<double>(modal) / totals[cs]);
  }
  return out;
}

inline std::vector<double> empirical_spuriousness(const ShiftDataset& ds) {
  return empirical_spuriousness(ds.train, ds.provenance.config.n_classes);
}

// ---- files -----------------------------------------------------------------

/// Header "class,domain,x0,...", one row per sample.
inline void write_split_csv(const std::string& path, const LabeledSplit& split) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidArgument("cannot open for writing: " + path);
  os << "class,domain";
  for (Eigen::Index j = 0; j < split.batch.inputs.cols(); ++j) os << ",x" << j;
  os << '\n';
  for (Eigen::Index i = 0; i < split.size(); ++i) {
    os << split.batch.labels[static_cast<std::size_t>(i)] << ',' << split.domains[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < split.batch.inputs.cols(); ++j) os << ',' << io::format_double(split.batch.inputs(i, j));
    os << '\n';
  }
}

inline LabeledSplit read_split_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw InvalidArgument("cannot open for reading: " + path);
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("empty dataset file: " + path);
  const auto header = io::split(io::trim(line), ',');
  require(header.size() >= 3 && header[0] == "class" && header[1] == "domain", "bad dataset header in " + path);
  const std::size_t width = header.size() - 2;
  std::vector<std::vector<double>> rows;
  LabeledSplit split;
  while (std::getline(is, line)) {
    line = io::trim(line);
    if (line.empty()) continue;
    const auto cells = io::split(line, ',');
    require(cells.size() == header.size(), "dataset row has the wrong number of columns in " + path);
    try {
      split.batch.labels.push_back(std::stoi(cells[0]));
      split.domains.push_back(std::stoi(cells[1]));
      std::vector<double> row(width);
      for (std::size_t j = 0; j < width; ++j) row[j] = std::stod(cells[j + 2]);
      rows.push_back(std::move(row));
    } catch (const std::logic_error&) {
      throw InvalidArgument("unparsable dataset row in " + path + ": " + line);
    }
  }
  split.batch.inputs = Matrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j)
      split.batch.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return split;
}

inline io::KeyValues provenance_entries(const ShiftDataset& ds) {
  const auto& p = ds.provenance;
  const auto& c = p.config;
  return {
      {"setting", to_string(c.setting)},
      {"n_classes", std::to_string(c.n_classes)},
      {"n_domains", std::to_string(c.n_domains)},
      {"dominant_ratio", io::format_double(c.dominant_ratio)},
      {"n_train", std::to_string(c.n_train)},
      {"n_test", std::to_string(c.n_test)},
      {"relevant_dim", std::to_string(c.relevant_dim)},
      {"nuisance_dim", std::to_string(c.nuisance_dim)},
      {"noise_sigma", io::format_double(c.noise_sigma)},
      {"seed", std::to_string(c.seed)},
      {"signed_nuisance", c.signed_nuisance ? "true" : "false"},
      {"train_dominant_domains", io::join(p.train_dominant)},
      {"test_dominant_domains", io::join(p.test_dominant)},
      {"bayes_relevant_accuracy", io::format_double(p.bayes_relevant_accuracy)},
      {"empirical_spuriousness", io::join(empirical_spuriousness(ds))},
  };
}

inline constexpr const char* kTrainFile = "train.csv";
inline constexpr const char* kTestFile = "test.csv";
inline constexpr const char* kProvenanceFile = "provenance.txt";

inline void write_dataset(const std::string& dir, const ShiftDataset& ds) {
  write_split_csv(dir + "/" + kTrainFile, ds.train);
  write_split_csv(dir + "/" + kTestFile, ds.test);
  io::write_key_values(dir + "/" + kProvenanceFile, provenance_entries(ds));
}

/// Reads a dataset directory. Only config fields needed downstream are
/// recovered from the provenance sidecar.
inline ShiftDataset read_dataset(const std::string& dir) {
  ShiftDataset ds;
  ds.train = read_split_csv(dir + "/" + kTrainFile);
  ds.test = read_split_csv(dir + "/" + kTestFile);
  const auto kv = io::read_key_values(dir + "/" + kProvenanceFile);
  auto get = [&](const std::string& k) {
    const auto it = kv.find(k);
    if (it == kv.end()) throw InvalidArgument("provenance missing key '" + k + "'");
    return it->second;
  };
  auto& c = ds.provenance.config;
  c.setting = parse_setting(get("setting"));
  c.n_classes = std::stoi(get("n_classes"));
  c.n_domains = std::stoi(get("n_domains"));
  c.dominant_ratio = std::stod(get("dominant_ratio"));
  c.n_train = static_cast<int>(ds.train.size());
  c.n_test = static_cast<int>(ds.test.size());
  c.relevant_dim = std::stoi(get("relevant_dim"));
  c.nuisance_dim = std::stoi(get("nuisance_dim"));
  c.noise_sigma = std::stod(get("noise_sigma"));
  c.seed = std::stoull(get("seed"));
  c.signed_nuisance = get("signed_nuisance") == "true";
  for (const auto& s : io::split(get("train_dominant_domains"), ',')) ds.provenance.train_dominant.push_back(std::stoi(s));
  for (const auto& s : io::split(get("test_dominant_domains"), ',')) ds.provenance.test_dominant.push_back(std::stoi(s));
  ds.provenance.bayes_relevant_accuracy = std::stod(get("bayes_relevant_accuracy"));
  require(ds.train.batch.inputs.cols() == c.input_dim() && ds.test.batch.inputs.cols() == c.input_dim(),
          "dataset width does not match its provenance");
  return ds;
}

}  // namespace reweight::data
