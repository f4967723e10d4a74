#pragma once

// Training loop: for each batch, forward, reload the global buffer, learn local
// sample weights against the decorrelation objective, take a weighted SGD step,
// then fold the batch into the buffer. Plus evaluation, ablation sweeps,
// saliency reports and run persistence.

#include <algorithm>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "reweight/common.hpp"
#include "reweight/data.hpp"
#include "reweight/independence.hpp"
#include "reweight/io.hpp"
#include "reweight/model.hpp"
#include "reweight/rff.hpp"
#include "reweight/weights.hpp"

namespace reweight::harness {

struct RunConfig {
  data::ShiftConfig dataset{};
  std::string dataset_path;  // overrides `dataset` when non-empty (CLI only)
  int epochs = 50;
  int balancing_epochs = kDefaultBalancingEpochs;
  int batch_size = 64;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_lr = 3.0;
  double reg_coeff = 0.3;
  RegularizerKind reg_kind = RegularizerKind::weight_deviation;
  int buffer_k = 2;
  std::vector<double> alphas{0.9, 0.5};  // empty means GlobalBuffer::default_alphas(buffer_k)
  int rff_dim = static_cast<int>(rff::kDefaultFunctions);
  PairMode pair_mode = PairMode::all;
  double sample_ratio = 1.0;
  bool linear_only = false;
  WeightingForm weighting = kDefaultWeightingForm;
  bool baseline = false;
  std::vector<int> hidden{16, 16};
  std::uint64_t seed = 0;

  std::vector<double> resolved_alphas() const {
    return alphas.empty() ? GlobalBuffer::default_alphas(static_cast<std::size_t>(buffer_k)) : alphas;
  }

  void validate() const {
    require(epochs >= 0, "RunConfig: epochs must be >= 0");
    require(balancing_epochs >= 0, "RunConfig: balancing_epochs must be >= 0");
    require(batch_size >= 2, "RunConfig: batch_size must be >= 2");
    require(lr > 0.0 && weight_lr > 0.0, "RunConfig: learning rates must be positive");
    require(momentum >= 0.0 && momentum < 1.0, "RunConfig: momentum must lie in [0, 1)");
    require(reg_coeff >= 0.0, "RunConfig: reg_coeff must be >= 0");
    require(buffer_k >= 0, "RunConfig: buffer_k must be >= 0");
    require(resolved_alphas().size() == static_cast<std::size_t>(buffer_k), "RunConfig: need one alpha per buffer slot");
    for (double a : resolved_alphas()) require(a >= 0.0 && a <= 1.0, "RunConfig: alphas must lie in [0, 1]");
    require(rff_dim >= 1, "RunConfig: rff_dim must be >= 1");
    require(sample_ratio > 0.0 && sample_ratio <= 1.0, "RunConfig: sample_ratio must lie in (0, 1]");
    require(!hidden.empty(), "RunConfig: need at least one hidden layer (the representation)");
    for (int h : hidden) require(h >= 1, "RunConfig: hidden widths must be positive");
    if (!baseline) require(hidden.back() >= 2, "RunConfig: representation needs >= 2 features to decorrelate");
  }
};

inline std::string to_string(PairMode m) { return m == PairMode::all ? "all" : "sampled"; }
inline std::string to_string(RegularizerKind k) {
  return k == RegularizerKind::weight_deviation ? "weight_deviation" : "theta_decay";
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double decorrelation = 0.0;  // mean over batches of the objective at the learned weights
  double w_min = 0.0;
  double w_max = 0.0;
  double w_entropy = 0.0;  // mean over batches of -sum (w/B) log(w/B)
};

struct DomainAccuracy {
  long correct = 0;
  long count = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
};

struct EvalResult {
  double accuracy = 0.0;
  long count = 0;
  std::map<int, DomainAccuracy> per_domain;
};

struct RunReport {
  std::vector<EpochRecord> epochs;
  bool weighted = true;
  double train_accuracy = 0.0;
  EvalResult test;
  std::uint64_t projection_master_seed = 0;
  std::vector<std::uint64_t> projection_seeds;
  std::uint64_t pair_seed = 0;
  std::size_t n_pairs = 0;
  Eigen::Index peak_weight_rows = 0;
  bool ok = true;
  std::string failure;
  int failed_epoch = -1;
  int failed_batch = -1;
};

/// Everything needed to resume a run bit-exactly at an epoch boundary.
struct TrainState {
  Mlp model;
  std::optional<GlobalBuffer> buffer;
  Vector last_theta;
  std::string shuffle_rng;
  int epochs_completed = 0;
  std::string config_fingerprint;  // every setting except the epoch count
};

struct TrainResult {
  RunReport report;
  TrainState state;
};

struct TrainHooks {
  std::function<void(int epoch, int batch, const Vector& w)> on_weights;
  std::function<void(int epoch, int batch, const GlobalBuffer&)> on_buffer;
};

inline EvalResult evaluate(const Mlp& model, const data::LabeledSplit& split) {
  require(split.batch.inputs.cols() == model.input_dim(), "evaluate: dataset width does not match the checkpoint");
  const std::vector<int> predicted = predict(model, split.batch.inputs);
  EvalResult out;
  long correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const bool hit = predicted[i] == split.batch.labels[i];
    correct += hit;
    auto& d = out.per_domain[split.domains[i]];
    d.correct += hit;
    ++d.count;
  }
  out.count = static_cast<long>(predicted.size());
  out.accuracy = out.count ? static_cast<double>(correct) / static_cast<double>(out.count) : 0.0;
  return out;
}

inline Mlp::Dims model_dims(const RunConfig& cfg, Eigen::Index input_dim, Eigen::Index classes) {
  Mlp::Dims dims{input_dim};
  for (int h : cfg.hidden) dims.push_back(h);
  dims.push_back(classes);
  return dims;
}

inline std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw InvalidArgument("checkpoint: corrupt rng state");
  return rng;
}

inline double normalized_entropy(const Vector& w) {
  const double b = static_cast<double>(w.size());
  double h = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double p = w(i) / b;
    h -= p * std::log(p);
  }
  return h;
}

inline std::string config_fingerprint(const RunConfig& cfg);

/// Runs (or resumes) training. Divergence does not throw: the report records
/// where the run stopped and the state reflects the last completed epoch.
inline TrainResult train(const RunConfig& cfg, const data::ShiftDataset& ds, const TrainHooks& hooks = {},
                         const TrainState* resume = nullptr) {
  cfg.validate();
  const auto& train_split = ds.train;
  const Eigen::Index n = train_split.size();
  const Eigen::Index bsz = cfg.batch_size;
  require(n >= bsz, "train: fewer training samples than one batch");
  const Eigen::Index n_batches = n / bsz;  // the incomplete tail batch is dropped
  const int classes = ds.provenance.config.n_classes;
  check_labels(train_split.batch.labels, n, classes);

  const Mlp::Dims dims = model_dims(cfg, train_split.batch.inputs.cols(), classes);
  TrainResult result{RunReport{}, TrainState{Mlp::random(dims, stream_seed(cfg.seed, SeedStream::model_init)),
                                             std::nullopt, Vector(), {}, 0, {}}};
  std::mt19937_64 shuffle_rng(stream_seed(cfg.seed, SeedStream::shuffle));
  if (resume) {
    require(resume->model.dims() == dims, "train: checkpoint architecture does not match the config");
    require(resume->config_fingerprint.empty() || resume->config_fingerprint == config_fingerprint(cfg),
            "train: checkpoint was written under a different configuration");
    result.state = *resume;
    shuffle_rng = rng_from_state(resume->shuffle_rng);
  }
  TrainState& st = result.state;
  st.config_fingerprint = config_fingerprint(cfg);
  RunReport& rep = result.report;
  rep.weighted = !cfg.baseline;

  const Eigen::Index m_z = cfg.hidden.back();
  rep.projection_master_seed = stream_seed(cfg.seed, SeedStream::projections);
  const auto projections = rff::sample_feature_projections(static_cast<std::size_t>(m_z),
                                                           static_cast<std::size_t>(cfg.rff_dim),
                                                           rep.projection_master_seed);
  for (const auto& p : projections) rep.projection_seeds.push_back(p.seed());
  rep.pair_seed = stream_seed(cfg.seed, SeedStream::pairs);
  std::vector<FeaturePair> pairs;
  if (!cfg.baseline) {
    pairs = select_pairs({cfg.pair_mode, cfg.sample_ratio, rep.pair_seed}, m_z);
    rep.n_pairs = pairs.size();
  }
  const WeightOptimizerConfig wcfg{cfg.balancing_epochs, cfg.weight_lr, Regularizer{cfg.reg_kind, cfg.reg_coeff}};
  const std::vector<double> alphas = cfg.resolved_alphas();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (int epoch = st.epochs_completed; epoch < cfg.epochs; ++epoch) {
    // Roll back to the epoch boundary if this epoch fails.
    const TrainState snapshot = st;
    const std::string rng_before = rng_state(shuffle_rng);
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.w_min = std::numeric_limits<double>::infinity();
    rec.w_max = -std::numeric_limits<double>::infinity();
    int b = 0;
    try {
      for (b = 0; b < n_batches; ++b) {
        Batch batch{Matrix(bsz, train_split.batch.inputs.cols()), std::vector<int>(static_cast<std::size_t>(bsz))};
        for (Eigen::Index r = 0; r < bsz; ++r) {
          const Eigen::Index src = order[static_cast<std::size_t>(b * bsz + r)];
          batch.inputs.row(r) = train_split.batch.inputs.row(src);
          batch.labels[static_cast<std::size_t>(r)] = train_split.batch.labels[static_cast<std::size_t>(src)];
        }
        const Matrix z_local = forward(st.model, batch.inputs).features();
        if (!z_local.allFinite()) throw Diverged("train: non-finite representation", static_cast<long>(epoch) * n_batches + b);
        Vector w_local = Vector::Ones(bsz);

        if (!cfg.baseline) {
          if (!st.buffer) st.buffer = GlobalBuffer::seeded(z_local, alphas);
          const ReloadedBatch reloaded = reload(*st.buffer, z_local, w_local);
          rep.peak_weight_rows = std::max(rep.peak_weight_rows, reloaded.features.rows());
          const DecorrelationObjective objective(reloaded.features, projections, pairs, cfg.linear_only, cfg.weighting);
          const Vector global_w = reloaded.weights.head(st.buffer->stored_rows());
          const LocalWeightResult lw = optimize_local_weights(objective, global_w, Vector::Zero(bsz), wcfg);
          w_local = lw.weights.w;
          st.last_theta = lw.weights.theta;
          rec.decorrelation += lw.final_decorrelation;
        }
        if (hooks.on_weights) hooks.on_weights(epoch, b, w_local);

        rec.train_loss += backward_and_step(st.model, batch, w_local, cfg.lr, cfg.momentum);
        if (!cfg.baseline) {
          st.buffer = save(*st.buffer, z_local, w_local);
          if (hooks.on_buffer) hooks.on_buffer(epoch, b, *st.buffer);
        }
        rec.w_min = std::min(rec.w_min, w_local.minCoeff());
        rec.w_max = std::max(rec.w_max, w_local.maxCoeff());
        rec.w_entropy += normalized_entropy(w_local);
      }
    } catch (const std::runtime_error& e) {  // Diverged, NumericUnderflow
      rep.ok = false;
      rep.failure = e.what();
      rep.failed_epoch = epoch + 1;
      rep.failed_batch = b + 1;
      st = snapshot;
      shuffle_rng = rng_from_state(rng_before);
      break;
    }
    const double nb = static_cast<double>(n_batches);
    rec.train_loss /= nb;
    rec.decorrelation /= nb;
    rec.w_entropy /= nb;
    rep.epochs.push_back(rec);
    st.epochs_completed = epoch + 1;
  }
  st.shuffle_rng = rng_state(shuffle_rng);

  rep.train_accuracy = evaluate(st.model, ds.train).accuracy;
  rep.test = evaluate(st.model, ds.test);
  return result;
}

// ---- checkpoint ------------------------------------------------------------

inline io::TensorArchive make_checkpoint(const TrainState& st) {
  io::TensorArchive ar;
  const auto& dims = st.model.dims();
  Vector dv(static_cast<Eigen::Index>(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i) dv(static_cast<Eigen::Index>(i)) = static_cast<double>(dims[i]);
  ar.add_vector("model.dims", dv);
  for (std::size_t l = 0; l < st.model.layers(); ++l) {
    const std::string p = "model.layer" + std::to_string(l);
    ar.add_matrix(p + ".weight", st.model.weight(l));
    ar.add_vector(p + ".bias", st.model.bias(l));
    ar.add_matrix(p + ".weight_velocity", st.model.weight_velocity(l));
    ar.add_vector(p + ".bias_velocity", st.model.bias_velocity(l));
  }
  if (st.buffer) {
    const auto& buf = *st.buffer;
    Vector geometry(2);
    geometry << static_cast<double>(buf.batch()), static_cast<double>(buf.features());
    ar.add_vector("buffer.geometry", geometry);
    Vector alphas(static_cast<Eigen::Index>(buf.k()));
    for (std::size_t i = 0; i < buf.k(); ++i) {
      alphas(static_cast<Eigen::Index>(i)) = buf.slots()[i].alpha;
      ar.add_matrix("buffer.slot" + std::to_string(i) + ".features", buf.slots()[i].features);
      ar.add_vector("buffer.slot" + std::to_string(i) + ".weights", buf.slots()[i].weights);
    }
    ar.add_vector("buffer.alphas", alphas);
  }
  ar.add_vector("weights.theta", st.last_theta);
  ar.add_bytes("rng.shuffle", st.shuffle_rng);
  ar.add_bytes("meta.epochs_completed", std::to_string(st.epochs_completed));
  ar.add_bytes("meta.config", st.config_fingerprint);
  return ar;
}

inline TrainState load_checkpoint(const io::TensorArchive& ar) {
  const Vector dv = ar.vector("model.dims");
  Mlp::Dims dims;
  for (Eigen::Index i = 0; i < dv.size(); ++i) dims.push_back(static_cast<Eigen::Index>(dv(i)));
  require(dims.size() >= 2, "checkpoint: bad model dims");
  std::vector<Matrix> w;
  std::vector<Vector> b;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::string p = "model.layer" + std::to_string(l);
    w.push_back(ar.matrix(p + ".weight"));
    b.push_back(ar.vector(p + ".bias"));
  }
  Mlp model(dims, std::move(w), std::move(b));
  for (std::size_t l = 0; l < model.layers(); ++l) {
    const std::string p = "model.layer" + std::to_string(l);
    model.weight_velocity(l) = ar.matrix(p + ".weight_velocity");
    model.bias_velocity(l) = ar.vector(p + ".bias_velocity");
    require(model.weight_velocity(l).rows() == model.weight(l).rows() &&
                model.weight_velocity(l).cols() == model.weight(l).cols() &&
                model.bias_velocity(l).size() == model.bias(l).size(),
            "checkpoint: velocity shape mismatch");
  }
  TrainState st{std::move(model), std::nullopt, ar.vector("weights.theta"), ar.bytes("rng.shuffle"),
                std::stoi(ar.bytes("meta.epochs_completed")), ar.bytes("meta.config")};
  if (ar.contains("buffer.geometry")) {
    const Vector geometry = ar.vector("buffer.geometry");
    const Vector alphas = ar.vector("buffer.alphas");
    std::vector<BufferSlot> slots;
    for (Eigen::Index i = 0; i < alphas.size(); ++i)
      slots.push_back({ar.matrix("buffer.slot" + std::to_string(i) + ".features"),
                       ar.vector("buffer.slot" + std::to_string(i) + ".weights"), alphas(i)});
    st.buffer.emplace(static_cast<Eigen::Index>(geometry(0)), static_cast<Eigen::Index>(geometry(1)), std::move(slots));
  }
  return st;
}

// ---- run artifacts ---------------------------------------------------------

inline std::string metrics_csv(const RunReport& rep) {
  std::ostringstream os;
  os << "epoch,train_loss";
  if (rep.weighted) os << ",decorrelation";
  os << ",w_min,w_max,w_entropy\n";
  for (const auto& r : rep.epochs) {
    os << r.epoch << ',' << io::format_double(r.train_loss);
    if (rep.weighted) os << ',' << io::format_double(r.decorrelation);
    os << ',' << io::format_double(r.w_min) << ',' << io::format_double(r.w_max) << ','
       << io::format_double(r.w_entropy) << '\n';
  }
  return os.str();
}

inline io::KeyValues config_entries(const RunConfig& c) {
  const auto& d = c.dataset;
  return {
      {"setting", data::to_string(d.setting)},
      {"n_classes", std::to_string(d.n_classes)},
      {"n_domains", std::to_string(d.n_domains)},
      {"dominant_ratio", io::format_double(d.dominant_ratio)},
      {"n_train", std::to_string(d.n_train)},
      {"n_test", std::to_string(d.n_test)},
      {"relevant_dim", std::to_string(d.relevant_dim)},
      {"nuisance_dim", std::to_string(d.nuisance_dim)},
      {"noise_sigma", io::format_double(d.noise_sigma)},
      {"data_seed", std::to_string(d.seed)},
      {"signed_nuisance", d.signed_nuisance ? "true" : "false"},
      {"data", c.dataset_path},
      {"epochs", std::to_string(c.epochs)},
      {"balancing_epochs", std::to_string(c.balancing_epochs)},
      {"batch_size", std::to_string(c.batch_size)},
      {"lr", io::format_double(c.lr)},
      {"momentum", io::format_double(c.momentum)},
      {"weight_lr", io::format_double(c.weight_lr)},
      {"reg_coeff", io::format_double(c.reg_coeff)},
      {"reg_kind", to_string(c.reg_kind)},
      {"buffer_k", std::to_string(c.buffer_k)},
      {"alphas", io::join(c.resolved_alphas())},
      {"rff_dim", std::to_string(c.rff_dim)},
      {"pair_mode", to_string(c.pair_mode)},
      {"sample_ratio", io::format_double(c.sample_ratio)},
      {"linear_only", c.linear_only ? "true" : "false"},
      {"weighting", to_string(c.weighting)},
      {"baseline", c.baseline ? "true" : "false"},
      {"hidden", io::join(c.hidden)},
      {"seed", std::to_string(c.seed)},
  };
}

inline std::string config_fingerprint(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg))
    if (k != "epochs" && k != "data") out += k + "=" + v + ";";
  return out;
}

inline io::KeyValues summary_entries(const RunConfig& cfg, const RunReport& rep) {
  io::KeyValues kv;
  kv.emplace_back("status", rep.ok ? "ok" : "diverged");
  if (!rep.ok) {
    kv.emplace_back("failure", rep.failure);
    kv.emplace_back("failed_epoch", std::to_string(rep.failed_epoch));
    kv.emplace_back("failed_batch", std::to_string(rep.failed_batch));
  }
  for (const auto& e : config_entries(cfg)) kv.emplace_back("config." + e.first, e.second);
  kv.emplace_back("projection_master_seed", std::to_string(rep.projection_master_seed));
  kv.emplace_back("projection_seeds", io::join(rep.projection_seeds));
  kv.emplace_back("pair_seed", std::to_string(rep.pair_seed));
  kv.emplace_back("n_pairs", std::to_string(rep.n_pairs));
  kv.emplace_back("peak_weight_rows", std::to_string(rep.peak_weight_rows));
  kv.emplace_back("epochs_completed", std::to_string(rep.epochs.size()));
  kv.emplace_back("train_accuracy", io::format_double(rep.train_accuracy));
  kv.emplace_back("test_accuracy", io::format_double(rep.test.accuracy));
  for (const auto& [d, acc] : rep.test.per_domain) {
    kv.emplace_back("test_accuracy_domain_" + std::to_string(d), io::format_double(acc.accuracy()));
    kv.emplace_back("test_count_domain_" + std::to_string(d), std::to_string(acc.count));
  }
  return kv;
}

inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kSummaryFile = "summary.txt";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";

inline void write_run(const std::string& dir, const RunConfig& cfg, const TrainResult& result) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir + "/" + kMetricsFile, std::ios::binary);
    if (!os) throw InvalidArgument("cannot open for writing: " + dir + "/" + kMetricsFile);
    os << metrics_csv(result.report);
  }
  io::write_key_values(dir + "/" + kSummaryFile, summary_entries(cfg, result.report));
  make_checkpoint(result.state).write(dir + "/" + kCheckpointFile);
}

// ---- ablation --------------------------------------------------------------

enum class Sweep { rff_dim, pair_ratio, buffer_size, linear_vs_nonlinear };

inline Sweep parse_sweep(const std::string& s) {
  if (s == "rff_dim") return Sweep::rff_dim;
  if (s == "pair_ratio") return Sweep::pair_ratio;
  if (s == "buffer_size") return Sweep::buffer_size;
  if (s == "linear_vs_nonlinear") return Sweep::linear_vs_nonlinear;
  throw InvalidArgument("unknown sweep '" + s + "'");
}

inline std::string to_string(Sweep s) {
  switch (s) {
    case Sweep::rff_dim: return "rff_dim";
    case Sweep::pair_ratio: return "pair_ratio";
    case Sweep::buffer_size: return "buffer_size";
    case Sweep::linear_vs_nonlinear: return "linear_vs_nonlinear";
  }
  return "?";
}

/// Applies one grid value to a config. rff_dim takes n_f per feature,
/// pair_ratio a sampling ratio, buffer_size the slot count k (default alphas),
/// linear_vs_nonlinear one of {linear, nonlinear}.
inline RunConfig apply_grid_value(RunConfig cfg, Sweep sweep, const std::string& value) {
  try {
    switch (sweep) {
      case Sweep::rff_dim:
        cfg.rff_dim = std::stoi(value);
        cfg.linear_only = false;
        break;
      case Sweep::pair_ratio:
        cfg.sample_ratio = std::stod(value);
        cfg.pair_mode = cfg.sample_ratio >= 1.0 ? PairMode::all : PairMode::sampled;
        break;
      case Sweep::buffer_size:
        cfg.buffer_k = std::stoi(value);
        cfg.alphas.clear();
        break;
      case Sweep::linear_vs_nonlinear:
        if (value == "linear")
          cfg.linear_only = true;
        else if (value == "nonlinear")
          cfg.linear_only = false;
        else
          throw InvalidArgument("linear_vs_nonlinear grid values are 'linear' or 'nonlinear', got '" + value + "'");
        break;
    }
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const InvalidArgument*>(&e)) throw;
    throw InvalidArgument("bad grid value '" + value + "' for sweep " + to_string(sweep));
  }
  cfg.baseline = false;
  return cfg;
}

struct AblationRow {
  std::string value;
  double mean = 0.0;
  double sd = 0.0;
  int n_ok = 0;
  int n_failed = 0;
  std::vector<double> accuracies;  // NaN for failed cells
};

struct AblationTable {
  Sweep sweep = Sweep::rff_dim;
  std::vector<AblationRow> rows;
};

/// Seed replicate r uses run seed derive_seed(base.seed, r) at every grid point.
inline std::uint64_t replicate_seed(std::uint64_t master, int replicate) {
  return derive_seed(master, static_cast<std::uint64_t>(replicate));
}

inline AblationTable ablate(const RunConfig& base, const data::ShiftDataset& ds, Sweep sweep,
                            const std::vector<std::string>& grid, int seeds) {
  require(!grid.empty(), "ablate: empty grid");
  require(seeds >= 2, "ablate: need at least two seeds");
  AblationTable table{sweep, {}};
  for (const auto& value : grid) {
    const RunConfig point = apply_grid_value(base, sweep, value);
    point.validate();
    AblationRow row{value, 0.0, 0.0, 0, 0, {}};
    std::vector<double> ok;
    for (int r = 0; r < seeds; ++r) {
      RunConfig cell = point;
      cell.seed = replicate_seed(base.seed, r);
      const TrainResult res = train(cell, ds);
      if (res.report.ok) {
        row.accuracies.push_back(res.report.test.accuracy);
        ok.push_back(res.report.test.accuracy);
      } else {
        row.accuracies.push_back(std::numeric_limits<double>::quiet_NaN());
        ++row.n_failed;
      }
    }
    row.n_ok = static_cast<int>(ok.size());
    if (!ok.empty()) {
      row.mean = std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
      double ss = 0.0;
      for (double a : ok) ss += (a - row.mean) * (a - row.mean);
      row.sd = ok.size() > 1 ? std::sqrt(ss / static_cast<double>(ok.size() - 1)) : 0.0;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline std::string ablation_csv(const AblationTable& t) {
  std::ostringstream os;
  os << "sweep,value,mean_accuracy,sd_accuracy,n_ok,n_failed,accuracies\n";
  for (const auto& r : t.rows) {
    std::vector<std::string> accs;
    for (double a : r.accuracies) accs.push_back(std::isnan(a) ? "failed" : io::format_double(a));
    os << to_string(t.sweep) << ',' << r.value << ',' << io::format_double(r.mean) << ',' << io::format_double(r.sd)
       << ',' << r.n_ok << ',' << r.n_failed << ',' << io::join(accs, ';') << '\n';
  }
  return os.str();
}

// ---- saliency --------------------------------------------------------------

struct SaliencyConfig {
  double noise_sigma = 0.15;
  int n_draws = 25;
  std::uint64_t seed = 0;
  int max_inputs = 0;  // 0 = every input
};

struct SaliencyRow {
  Eigen::Index index = 0;
  int label = 0;
  int target = 0;
  double relevant_fraction = 0.0;
  Vector attribution;
};

struct SaliencyReport {
  int relevant_dim = 0;
  std::vector<SaliencyRow> rows;

  double mean_relevant_fraction() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.relevant_fraction;
    return s / static_cast<double>(rows.size());
  }
};

/// SmoothGrad attribution toward each input's true class; the first
/// relevant_dim input coordinates form the relevant block.
inline SaliencyReport saliency_report(const Mlp& model, const data::LabeledSplit& inputs, int relevant_dim,
                                      const SaliencyConfig& cfg) {
  require(inputs.batch.inputs.cols() == model.input_dim(), "saliency_report: input width does not match the model");
  require(relevant_dim >= 0 && relevant_dim <= model.input_dim(), "saliency_report: bad relevant_dim");
  std::mt19937_64 rng(stream_seed(cfg.seed, SeedStream::saliency));
  SaliencyReport rep{relevant_dim, {}};
  const Eigen::Index n = cfg.max_inputs > 0 ? std::min<Eigen::Index>(cfg.max_inputs, inputs.size()) : inputs.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    const int label = inputs.batch.labels[static_cast<std::size_t>(i)];
    SaliencyRow row{i, label, label, 0.0,
                    smoothgrad_saliency(model, inputs.batch.inputs.row(i).transpose(), label, cfg.noise_sigma,
                                        cfg.n_draws, rng)};
    const double total = row.attribution.sum();
    row.relevant_fraction = total > 0.0 ? row.attribution.head(relevant_dim).sum() / total : 0.0;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

inline std::string saliency_csv(const SaliencyReport& rep) {
  std::ostringstream os;
  os << "index,class,target,relevant_fraction";
  const Eigen::Index width = rep.rows.empty() ? 0 : rep.rows.front().attribution.size();
  for (Eigen::Index j = 0; j < width; ++j) os << ",a" << j;
  os << '\n';
  for (const auto& r : rep.rows) {
    os << r.index << ',' << r.label << ',' << r.target << ',' << io::format_double(r.relevant_fraction);
    for (Eigen::Index j = 0; j < r.attribution.size(); ++j) os << ',' << io::format_double(r.attribution(j));
    os << '\n';
  }
  return os.str();
}

}  // namespace reweight::harness
