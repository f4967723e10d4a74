// Command-line front end: generate, train, evaluate, ablate, saliency.
//
// Every flag may also come from a flat key=value file given with --config;
// keys are flag names with or without the leading dashes, and underscores
// are accepted in place of hyphens. Command-line values win over the file.
// A relative --out is resolved under $REWEIGHT_OUTPUT_ROOT when it is set.
//
// Failures print one line to stderr:
//   error kind=<kind> message="<text>" [epoch=<e> batch=<b>]
// and exit nonzero (2 usage / invalid argument, 3 diverged, 1 anything else).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reweight/reweight.hpp"

namespace fs = std::filesystem;
using namespace reweight;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitOther = 1;
constexpr const char* kOutputRootEnv = "REWEIGHT_OUTPUT_ROOT";

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c == '\n' ? ' ' : c);
  }
  return out + "\"";
}

void print_error(const std::string& kind, const std::string& message, const std::string& extra = {}) {
  std::cerr << "error kind=" << kind << " message=" << quoted(message);
  if (!extra.empty()) std::cerr << ' ' << extra;
  std::cerr << '\n';
}

std::string resolve_out(const std::string& out) {
  const fs::path p(out);
  const char* root = std::getenv(kOutputRootEnv);
  if (p.is_absolute() || root == nullptr || *root == '\0') return p.string();
  return (fs::path(root) / p).string();
}

// Turns config-file entries into argv tokens placed ahead of the real ones.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> file_tokens, rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
      continue;
    }
    for (const auto& [key, value] : io::read_key_values(path)) {
      std::string name = key;
      while (!name.empty() && name.front() == '-') name.erase(0, 1);
      for (char& c : name)
        if (c == '_') c = '-';
      file_tokens.push_back("--" + name + "=" + value);
    }
  }
  file_tokens.insert(file_tokens.end(), rest.begin(), rest.end());
  return file_tokens;
}

void add_dataset_options(CLI::App& app, data::ShiftConfig& d) {
  app.add_option("--setting", d.setting, "classic | unbalanced | flexible | adversarial")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, data::Setting>{{"classic", data::Setting::classic},
                                               {"unbalanced", data::Setting::unbalanced},
                                               {"flexible", data::Setting::flexible},
                                               {"adversarial", data::Setting::adversarial}}));
  app.add_option("--n-classes", d.n_classes);
  app.add_option("--n-domains", d.n_domains);
  app.add_option("--dominant-ratio", d.dominant_ratio);
  app.add_option("--n-train", d.n_train);
  app.add_option("--n-test", d.n_test);
  app.add_option("--relevant-dim", d.relevant_dim);
  app.add_option("--nuisance-dim", d.nuisance_dim);
  app.add_option("--noise-sigma", d.noise_sigma);
  app.add_option("--data-seed", d.seed);
  app.add_flag("--signed-nuisance", d.signed_nuisance);
}

struct RunOptions {
  harness::RunConfig cfg;
  std::string alphas;
  std::string hidden;
};

void add_run_options(CLI::App& app, RunOptions& o) {
  auto& c = o.cfg;
  add_dataset_options(app, c.dataset);
  app.add_option("--data", c.dataset_path, "dataset directory written by `generate` (overrides dataset flags)");
  app.add_option("--epochs", c.epochs);
  app.add_option("--balancing-epochs", c.balancing_epochs);
  app.add_option("--batch-size", c.batch_size);
  app.add_option("--lr", c.lr);
  app.add_option("--momentum", c.momentum);
  app.add_option("--weight-lr", c.weight_lr);
  app.add_option("--reg-coeff", c.reg_coeff);
  app.add_option("--reg-kind", c.reg_kind, "weight_deviation | theta_decay")
      ->transform(CLI::CheckedTransformer(std::map<std::string, RegularizerKind>{
          {"weight_deviation", RegularizerKind::weight_deviation}, {"theta_decay", RegularizerKind::theta_decay}}));
  app.add_option("--buffer-k", c.buffer_k);
  app.add_option("--alphas", o.alphas, "comma-separated, one per slot; empty = defaults for buffer-k");
  app.add_option("--rff-dim", c.rff_dim);
  app.add_option("--pair-mode", c.pair_mode, "all | sampled")
      ->transform(CLI::CheckedTransformer(std::map<std::string, PairMode>{{"all", PairMode::all},
                                                                          {"sampled", PairMode::sampled}}));
  app.add_option("--sample-ratio", c.sample_ratio);
  app.add_flag("--linear-only", c.linear_only);
  app.add_option("--weighting", c.weighting, "scaled_features | weighted_mean")
      ->transform(CLI::CheckedTransformer(std::map<std::string, WeightingForm>{
          {"scaled_features", WeightingForm::scaled_features}, {"weighted_mean", WeightingForm::weighted_mean}}));
  app.add_flag("--baseline", c.baseline);
  app.add_option("--hidden", o.hidden, "comma-separated hidden widths; the last is the representation");
  app.add_option("--seed", c.seed);
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& text, Parse parse, const char* what) {
  std::vector<T> out;
  for (const auto& tok : io::split(text, ',')) {
    const std::string t = io::trim(tok);
    if (t.empty()) continue;
    try {
      out.push_back(parse(t));
    } catch (const std::logic_error&) {
      throw InvalidArgument(std::string("bad value '") + t + "' in --" + what);
    }
  }
  return out;
}

harness::RunConfig finish_run_config(RunOptions& o, bool alphas_given) {
  auto& c = o.cfg;
  if (!o.hidden.empty()) c.hidden = parse_list<int>(o.hidden, [](const std::string& s) { return std::stoi(s); }, "hidden");
  if (alphas_given)
    c.alphas = parse_list<double>(o.alphas, [](const std::string& s) { return std::stod(s); }, "alphas");
  else if (c.buffer_k != 2)
    c.alphas.clear();
  c.validate();
  return c;
}

data::ShiftDataset load_dataset(const harness::RunConfig& c) {
  if (!c.dataset_path.empty()) return data::read_dataset(c.dataset_path);
  return data::generate(c.dataset);
}

void print_kv(const io::KeyValues& kv) {
  for (const auto& [k, v] : kv) std::cout << k << '=' << v << '\n';
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string sub;
  if (!args.empty() && args.front().rfind("-", 0) != 0) {
    sub = args.front();
    args.erase(args.begin());
  }
  args = expand_config(args);
  if (!sub.empty()) args.insert(args.begin(), sub);
  std::vector<std::string> reversed(args.rbegin(), args.rend());

  CLI::App app{"Sample reweighting by feature decorrelation"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  std::string out_dir;

  // generate
  data::ShiftConfig gen_cfg;
  auto* gen = app.add_subcommand("generate", "write a synthetic dataset directory");
  add_dataset_options(*gen, gen_cfg);
  gen->add_option("--out", out_dir, "output directory")->default_val("dataset");

  // train
  RunOptions train_opts;
  std::string resume_path;
  auto* tr = app.add_subcommand("train", "train a model and write metrics, summary and checkpoint");
  add_run_options(*tr, train_opts);
  tr->add_option("--resume", resume_path, "checkpoint to continue from");
  tr->add_option("--out", out_dir, "run directory")->default_val("run");

  // evaluate
  data::ShiftConfig eval_data_cfg;
  std::string eval_data, checkpoint_path, eval_split = "test";
  auto* ev = app.add_subcommand("evaluate", "accuracy of a checkpoint, overall and per domain");
  add_dataset_options(*ev, eval_data_cfg);
  ev->add_option("--data", eval_data, "dataset directory (overrides dataset flags)");
  ev->add_option("--checkpoint", checkpoint_path)->required();
  ev->add_option("--split", eval_split)->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--out", out_dir, "optional directory for evaluation.txt");

  // ablate
  RunOptions ablate_opts;
  std::string sweep_name, grid_text;
  int ablate_seeds = 10;
  auto* ab = app.add_subcommand("ablate", "sweep one setting over a grid and several seeds");
  add_run_options(*ab, ablate_opts);
  ab->add_option("--sweep", sweep_name, "rff_dim | pair_ratio | buffer_size | linear_vs_nonlinear")->required();
  ab->add_option("--grid", grid_text, "comma-separated grid values")->required();
  ab->add_option("--seeds", ablate_seeds);
  ab->add_option("--out", out_dir, "output directory")->default_val("ablation");

  // saliency
  data::ShiftConfig sal_data_cfg;
  std::string sal_data, sal_checkpoint, sal_split = "test";
  harness::SaliencyConfig sal_cfg;
  auto* sa = app.add_subcommand("saliency", "SmoothGrad attribution split into relevant and nuisance blocks");
  add_dataset_options(*sa, sal_data_cfg);
  sa->add_option("--data", sal_data, "dataset directory (overrides dataset flags)");
  sa->add_option("--checkpoint", sal_checkpoint)->required();
  sa->add_option("--split", sal_split)->check(CLI::IsMember({"train", "test"}));
  sa->add_option("--smooth-sigma", sal_cfg.noise_sigma);
  sa->add_option("--draws", sal_cfg.n_draws);
  sa->add_option("--saliency-seed", sal_cfg.seed);
  sa->add_option("--max-inputs", sal_cfg.max_inputs);
  sa->add_option("--out", out_dir, "output directory")->default_val("saliency");

  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return kExitUsage;
  }

  if (gen->parsed()) {
    gen_cfg.validate();
    const auto ds = data::generate(gen_cfg);
    const std::string dir = resolve_out(out_dir);
    fs::create_directories(dir);
    data::write_dataset(dir, ds);
    std::cout << "dataset=" << dir << '\n';
    print_kv(data::provenance_entries(ds));
    return 0;
  }

  if (tr->parsed()) {
    harness::RunConfig cfg = finish_run_config(train_opts, tr->count("--alphas") > 0);
    const auto ds = load_dataset(cfg);
    std::optional<harness::TrainState> resume;
    if (!resume_path.empty()) resume = harness::load_checkpoint(io::TensorArchive::read(resume_path));
    const auto result = harness::train(cfg, ds, {}, resume ? &*resume : nullptr);
    const std::string dir = resolve_out(out_dir);
    harness::write_run(dir, cfg, result);
    std::cout << "run=" << dir << '\n';
    print_kv(harness::summary_entries(cfg, result.report));
    if (!result.report.ok) {
      print_error("diverged", result.report.failure,
                  "epoch=" + std::to_string(result.report.failed_epoch) +
                      " batch=" + std::to_string(result.report.failed_batch));
      return kExitDiverged;
    }
    return 0;
  }

  if (ev->parsed()) {
    const data::ShiftDataset ds = eval_data.empty() ? data::generate(eval_data_cfg) : data::read_dataset(eval_data);
    const auto state = harness::load_checkpoint(io::TensorArchive::read(checkpoint_path));
    const auto& split = eval_split == "train" ? ds.train : ds.test;
    const auto res = harness::evaluate(state.model, split);
    io::KeyValues kv{{"split", eval_split}, {"accuracy", io::format_double(res.accuracy)},
                     {"count", std::to_string(res.count)}};
    for (const auto& [d, acc] : res.per_domain) {
      kv.emplace_back("accuracy_domain_" + std::to_string(d), io::format_double(acc.accuracy()));
      kv.emplace_back("count_domain_" + std::to_string(d), std::to_string(acc.count));
    }
    if (!out_dir.empty()) {
      const std::string dir = resolve_out(out_dir);
      fs::create_directories(dir);
      io::write_key_values(dir + "/evaluation.txt", kv);
    }
    print_kv(kv);
    return 0;
  }

  if (ab->parsed()) {
    harness::RunConfig cfg = finish_run_config(ablate_opts, ab->count("--alphas") > 0);
    const auto sweep = harness::parse_sweep(sweep_name);
    std::vector<std::string> grid;
    for (const auto& g : io::split(grid_text, ','))
      if (!io::trim(g).empty()) grid.push_back(io::trim(g));
    const auto ds = load_dataset(cfg);
    const auto table = harness::ablate(cfg, ds, sweep, grid, ablate_seeds);
    const std::string dir = resolve_out(out_dir);
    fs::create_directories(dir);
    const std::string csv = harness::ablation_csv(table);
    std::ofstream(dir + "/ablation.csv", std::ios::binary) << csv;
    std::cout << csv;
    return 0;
  }

  if (sa->parsed()) {
    const data::ShiftDataset ds = sal_data.empty() ? data::generate(sal_data_cfg) : data::read_dataset(sal_data);
    const auto state = harness::load_checkpoint(io::TensorArchive::read(sal_checkpoint));
    const auto& split = sal_split == "train" ? ds.train : ds.test;
    const auto rep = harness::saliency_report(state.model, split, ds.provenance.config.relevant_dim, sal_cfg);
    const std::string dir = resolve_out(out_dir);
    fs::create_directories(dir);
    std::ofstream(dir + "/saliency.csv", std::ios::binary) << harness::saliency_csv(rep);
    const io::KeyValues kv{{"inputs", std::to_string(rep.rows.size())},
                           {"relevant_dim", std::to_string(rep.relevant_dim)},
                           {"mean_relevant_fraction", io::format_double(rep.mean_relevant_fraction())}};
    io::write_key_values(dir + "/saliency_summary.txt", kv);
    print_kv(kv);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Diverged& e) {
    print_error("diverged", e.what(), "step=" + std::to_string(e.step()));
    return kExitDiverged;
  } catch (const InvalidArgument& e) {
    print_error("invalid_argument", e.what());
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    print_error("invalid_argument", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    print_error("runtime", e.what());
    return kExitOther;
  }
}
