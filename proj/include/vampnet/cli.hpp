#pragma once

// Command-line front end: ingest, synth, train, explain, report.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vampnet/checkpoint.hpp"
#include "vampnet/config.hpp"
#include "vampnet/explain.hpp"

namespace vampnet {

namespace fs = std::filesystem;

// ------------------------------------------------------------ orchestration

inline std::unique_ptr<VampNet> make_vampnet(const RunConfig& c, const std::vector<SampleRecord>& train_set,
                                             std::uint64_t seed) {
  VampNetConfig vc = c.vampnet;
  if (vc.max_len == 0) vc.max_len = length_percentile(train_set);
  Vocabulary vocab;
  if (c.vocab_mode == VocabMode::Static) {
    vocab = build_static_vocab(train_set);
  } else {
    std::vector<std::string> corpus;
    for (const auto& r : train_set)
      for (const auto& t : r.tokens) corpus.push_back(t.canonical());
    vocab = train_subword(corpus, c.subword_vocab_size);
  }
  return std::make_unique<VampNet>(vc, std::move(vocab), fit_normalizer(train_set), seed);
}

/// Presence columns from the chi-squared scan of the training split.
inline PresenceColumns select_columns(const RunConfig& c, const std::vector<SampleRecord>& train_set,
                                      std::vector<VariantTest>* selected = nullptr) {
  auto tests = chi2_select(train_set, c.chi2_alpha);
  if (tests.empty())
    throw ConfigError("no variant passed chi-squared selection at alpha=" + format_double(c.chi2_alpha));
  if (selected) *selected = tests;
  return PresenceColumns::from_tests(tests);
}

inline std::unique_ptr<Classifier> make_model(const RunConfig& c, const std::vector<SampleRecord>& train_set,
                                              std::uint64_t seed, std::vector<VariantTest>* selected = nullptr) {
  if (c.model == "vampnet") return make_vampnet(c, train_set, seed);
  if (c.model == "mlp") return std::make_unique<MlpBaseline>(c.mlp, select_columns(c, train_set, selected), seed);
  if (c.model == "cnn")
    return std::make_unique<CnnBaseline>(c.cnn_baseline, select_columns(c, train_set, selected), seed);
  throw ConfigError("unknown model " + c.model);
}

struct TrainRun {
  std::unique_ptr<Classifier> model;
  RunConfig config;  // as trained (search winner applied)
  TrainResult result;
  SplitIndices split;
  std::vector<std::pair<std::string, MetricsReport>> metrics;
  std::vector<VariantTest> selected;
  std::optional<SearchResult> search;
};

/// Splits the cohort, fits the model on the training split with early
/// stopping on validation, and scores all three splits. One seed
/// (config.train.seed) drives the split, the initialisation and training.
inline TrainRun train_run(const RunConfig& config, const std::vector<SampleRecord>& cohort) {
  const auto& tc = config.train;
  tc.validate();
  TrainRun run;
  run.config = config;
  run.split = stratified_split(cohort, tc.train_fraction, tc.val_fraction, tc.seed);
  const auto train_set = select(cohort, run.split.train), val_set = select(cohort, run.split.val),
             test_set = select(cohort, run.split.test);
  if (config.search_budget > 0) {
    if (config.model != "vampnet") throw ConfigError("hyperparameter search applies to --model vampnet only");
    auto apply = [&](const SearchTrial& t) {
      RunConfig c = config;
      c.vampnet.sab.d_model = t.emb_dim;
      c.vampnet.sab.hidden_dim = t.hidden_dim;
      c.vampnet.sab.num_layers = t.num_layers;
      c.vampnet.sab.dropout = c.vampnet.cnn.dropout = t.dropout;
      c.vampnet.cnn.kernel = t.kernel;
      c.train.learning_rate = t.learning_rate;
      c.train.seed = t.seed;
      return c;
    };
    std::unique_ptr<Classifier> best_model;
    TrainResult best_result;
    double best = 0;
    run.search = random_search(SearchSpace{}, config.search_budget, tc.seed, [&](SearchTrial& t) {
      RunConfig c = apply(t);
      auto m = make_model(c, train_set, t.seed);
      auto res = train(*m, train_set, val_set, c.train);
      const auto va = evaluate(*m, val_set, res.class_weights);
      t.val_auc = std::isnan(va.auc) ? 0.0 : va.auc;
      t.val_accuracy = va.accuracy;
      if (!best_model || t.objective() > best) {  // ties keep the earlier trial, as random_search does
        best = t.objective();
        best_model = std::move(m);
        best_result = res;
        run.config = c;
      }
    });
    run.model = std::move(best_model);
    run.result = best_result;
  } else {
    run.model = make_model(config, train_set, tc.seed, &run.selected);
    run.result = train(*run.model, train_set, val_set, tc);
  }
  const auto& w = run.result.class_weights;
  run.metrics = {{"train", evaluate(*run.model, train_set, w)},
                 {"val", evaluate(*run.model, val_set, w)},
                 {"test", evaluate(*run.model, test_set, w)}};
  return run;
}

// ------------------------------------------------------------ file helpers

inline std::vector<SampleRecord> load_cohort_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ParseError("cannot open cohort " + p.string());
  return read_cohort(in, p.string());
}

inline std::ofstream open_output(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw ParseError("cannot write " + p.string());
  return out;
}

inline void write_split(std::ostream& out, const std::vector<SampleRecord>& cohort, const SplitIndices& s) {
  out << "sample_id,split\n";
  for (auto [name, idx] : {std::pair{"train", &s.train}, std::pair{"val", &s.val}, std::pair{"test", &s.test}})
    for (auto i : *idx) out << cohort[i].sample_id << ',' << name << '\n';
}

/// Worker cap from VAMPNET_THREADS (default 1). Computation is
/// single-threaded; larger values are accepted and noted.
inline std::size_t configured_threads() {
  const char* v = std::getenv("VAMPNET_THREADS");
  if (!v || !*v) return 1;
  auto n = detail::parse_int(v);
  if (!n || *n < 1) throw ConfigError("VAMPNET_THREADS must be a positive integer, got '" + std::string(v) + "'");
  if (*n > 1) log_info("VAMPNET_THREADS=" + std::string(v) + ": running single-threaded");
  return static_cast<std::size_t>(*n);
}

// ------------------------------------------------------------ report

struct RunSummary {
  std::string run;
  MetricsReport test;
};

inline std::vector<RunSummary> collect_runs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParseError("not a directory: " + dir.string());
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory() && fs::exists(e.path() / "metrics.csv")) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<RunSummary> runs;
  for (const auto& d : subdirs) {
    std::ifstream in(d / "metrics.csv");
    std::string line;
    std::getline(in, line);
    bool found = false;
    while (std::getline(in, line)) {
      auto f = detail::split(line, ',');
      if (f.size() != 9 || f[0] != "test") continue;
      const std::string where = (d / "metrics.csv").string();
      MetricsReport m;
      m.count = static_cast<std::size_t>(parse_double_exact(f[1], where));
      m.loss = parse_double_exact(f[2], where);
      m.accuracy = parse_double_exact(f[3], where);
      m.balanced_accuracy = parse_double_exact(f[4], where);
      m.precision = parse_double_exact(f[5], where);
      m.recall = parse_double_exact(f[6], where);
      m.f1 = parse_double_exact(f[7], where);
      m.auc = f[8] == "nan" ? std::nan("") : parse_double_exact(f[8], where);
      runs.push_back({d.filename().string(), m});
      found = true;
    }
    if (!found) throw ParseError((d / "metrics.csv").string() + ": no test row");
  }
  std::stable_sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) {
    const double x = std::isnan(a.test.auc) ? -1 : a.test.auc, y = std::isnan(b.test.auc) ? -1 : b.test.auc;
    return x > y;
  });
  return runs;
}

inline void write_report(std::ostream& out, const std::vector<RunSummary>& runs) {
  out << "run,count,accuracy,balanced_accuracy,precision,recall,f1,auc\n";
  for (const auto& r : runs)
    out << r.run << ',' << r.test.count << ',' << format_double(r.test.accuracy) << ','
        << format_double(r.test.balanced_accuracy) << ',' << format_double(r.test.precision) << ','
        << format_double(r.test.recall) << ',' << format_double(r.test.f1) << ',' << format_double(r.test.auc) << '\n';
}

// ------------------------------------------------------------ commands

inline void cmd_ingest(const fs::path& vcf_dir, const fs::path& phenotypes, const std::string& drug,
                       const fs::path& out_path, std::ostream& out, std::ostream& err) {
  std::ifstream pin(phenotypes);
  if (!pin) throw ParseError("cannot open phenotypes " + phenotypes.string());
  IngestSummary s;
  auto cohort = ingest_directory(vcf_dir, parse_phenotypes(pin, phenotypes.string()), drug, s);
  for (const auto& w : s.warnings) err << "warning: " << w << '\n';
  auto f = open_output(out_path);
  write_cohort(f, cohort);
  out << "vcf_files=" << s.vcf_files << "\nsamples_kept=" << s.samples_kept
      << "\ndropped_low_quality=" << s.dropped_low_quality
      << "\ndropped_missing_phenotype=" << s.dropped_missing_phenotype << "\nempty_samples=" << s.empty_samples
      << "\nunique_variants=" << s.unique_variants << '\n';
}

inline void cmd_synth(const RunConfig& c, const fs::path& out_path, std::ostream& out) {
  auto cohort = generate(c.synth);
  auto f = open_output(out_path);
  write_cohort(f, cohort.records);
  auto l = open_output(fs::path(out_path.string() + ".ledger.csv"));
  write_ledger(l, cohort.ledger);
  out << "samples=" << cohort.records.size() << "\nbayes_auc=" << format_double(bayes_optimal_auc(cohort)) << '\n';
}

inline void cmd_train(const RunConfig& c, const fs::path& cohort_path, const fs::path& out_dir, std::ostream& out) {
  const auto cohort = load_cohort_file(cohort_path);
  auto run = train_run(c, cohort);
  fs::create_directories(out_dir);
  {
    auto f = open_output(out_dir / "model.ckpt");
    save_checkpoint(f, *run.model);
  }
  {
    auto f = open_output(out_dir / "curves.csv");
    write_curves(f, run.result.curves);
  }
  {
    auto f = open_output(out_dir / "metrics.csv");
    write_metrics(f, run.metrics);
  }
  {
    auto f = open_output(out_dir / "split.csv");
    write_split(f, cohort, run.split);
  }
  {
    auto f = open_output(out_dir / "config.cfg");
    write_config(f, run.config);
  }
  if (!run.selected.empty()) {
    auto f = open_output(out_dir / "selected_variants.tsv");
    write_selected_variants(f, run.selected);
  }
  if (run.search) {
    auto f = open_output(out_dir / "search.csv");
    f << "trial,emb_dim,hidden_dim,num_layers,dropout,kernel,learning_rate,seed,val_auc,val_accuracy,objective\n";
    for (const auto& t : run.search->trials)
      f << t.index << ',' << t.emb_dim << ',' << t.hidden_dim << ',' << t.num_layers << ',' << format_double(t.dropout)
        << ',' << t.kernel << ',' << format_double(t.learning_rate) << ',' << t.seed << ','
        << format_double(t.val_auc) << ',' << format_double(t.val_accuracy) << ',' << format_double(t.objective())
        << '\n';
  }
  const auto& test = run.metrics.back().second;
  out << "best_epoch=" << run.result.best_epoch << "\nepochs_run=" << run.result.epochs_run
      << "\ntest_auc=" << format_double(test.auc) << "\ntest_accuracy=" << format_double(test.accuracy) << '\n';
}

inline void cmd_explain(const RunConfig& c, const fs::path& ckpt, const fs::path& cohort_path, const std::string& mode,
                        const fs::path& out_dir, std::size_t top_hubs, std::ostream& out) {
  std::ifstream in(ckpt);
  if (!in) throw ParseError("cannot open checkpoint " + ckpt.string());
  auto lm = load_checkpoint(in);
  const auto* model = dynamic_cast<const VampNet*>(lm.model.get());
  if (!model) throw ConfigError("explain --mode " + mode + " needs a vampnet checkpoint, got " + lm.model->kind());
  const auto cohort = load_cohort_file(cohort_path);
  fs::create_directories(out_dir);
  if (mode == "ig") {
    std::vector<SampleAttribution> per;
    for (const auto& r : cohort) per.push_back(variant_attributions(*model, r, c.ig_steps));
    auto report = aggregate_attributions(per);
    auto f = open_output(out_dir / "attributions.csv");
    write_attributions(f, report);
    out << "variants=" << report.size() << '\n';
  } else if (mode == "ablate") {
    if (!model->config().use_path2) throw ConfigError("channel ablation needs a model with Path-2");
    auto rows = ablate_channels(*model, cohort);
    auto f = open_output(out_dir / "ablation.csv");
    write_ablation(f, rows);
    out << "channels=" << rows.size() << '\n';
  } else {
    auto im = extract_interactions(*model, cohort, c.min_cooccurrence, c.attention_layer);
    {
      auto f = open_output(out_dir / "interactions.tsv");
      write_interactions(f, im);
    }
    if (mode == "interactions") {
      auto f = open_output(out_dir / "hubs.csv");
      f << "variant,weighted_degree\n";
      for (const auto& h : detect_hubs(im, top_hubs)) f << h.variant << ',' << format_double(h.degree) << '\n';
      out << "variants=" << im.size() << '\n';
    } else {
      auto p = greedy_modularity(threshold_graph(im, nonzero_weight_percentile(im, 0.75)));
      auto f = open_output(out_dir / "communities.csv");
      write_communities(f, im.variants, p);
      out << "variants=" << im.size() << "\nQ=" << format_double(p.q) << '\n';
    }
  }
}

inline void cmd_report(const fs::path& runs_dir, const fs::path& out_path, std::ostream& out) {
  auto runs = collect_runs(runs_dir);
  auto f = open_output(out_path);
  if (runs.empty()) throw ParseError("no runs with metrics.csv under " + runs_dir.string());
  write_report(f, runs);
  out << "runs=" << runs.size() << '\n';
}

// ------------------------------------------------------------ entry point

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"VAMP-Net: variant-aware multi-path drug-resistance classifier"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  std::string config_file;
  app.add_flag("-v,--verbose", verbose, "Log per-epoch progress");
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");
  app.add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);

  std::string vcf_dir, phenotypes, drug = "RIF", out_path;
  auto* ingest = app.add_subcommand("ingest", "Build a cohort file from a VCF directory");
  ingest->add_option("--vcf-dir", vcf_dir)->required();
  ingest->add_option("--phenotypes", phenotypes)->required();
  ingest->add_option("--drug", drug);
  ingest->add_option("--out", out_path)->required();

  std::string spec_file;
  std::uint64_t seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort with a planted ledger");
  synth->add_option("--spec", spec_file, "Configuration file with a [synth] section")->check(CLI::ExistingFile);
  synth->add_option("--seed", seed)->required();
  synth->add_option("--out", out_path)->required();

  std::string cohort, model = "vampnet", fusion, masked, augment, optimizer;
  bool no_path2 = false;
  std::optional<double> chi2_alpha, lr;
  std::optional<std::size_t> search_budget, epochs;
  auto* trn = app.add_subcommand("train", "Train a model and write checkpoint, curves and metrics");
  trn->add_option("--cohort", cohort)->required();
  trn->add_option("--model", model)->check(CLI::IsMember({"vampnet", "mlp", "cnn"}));
  auto* fusion_opt =
      trn->add_option("--fusion", fusion)->check(CLI::IsMember({"amplification", "suppression", "adaptive", "concat"}));
  auto* masked_opt = trn->add_option("--masked", masked)->check(CLI::IsMember({"true", "false"}));
  trn->add_option("--augment", augment)->check(CLI::IsMember({"true", "false"}));
  auto* no_path2_opt = trn->add_flag("--no-path2", no_path2, "SAB-only network");
  auto* alpha_opt = trn->add_option("--chi2-alpha", chi2_alpha);
  trn->add_option("--optimizer", optimizer)->check(CLI::IsMember({"sgd", "adam"}));
  trn->add_option("--lr", lr);
  trn->add_option("--epochs", epochs);
  trn->add_option("--search-budget", search_budget);
  trn->add_option("--seed", seed)->required();
  trn->add_option("--out", out_path, "Output directory")->required();

  std::string ckpt, mode;
  std::optional<std::size_t> steps, min_co;
  std::size_t top_hubs = 10;
  auto* expl = app.add_subcommand("explain", "Attributions, channel ablation, interactions, communities");
  expl->add_option("--ckpt", ckpt)->required();
  expl->add_option("--cohort", cohort)->required();
  expl->add_option("--mode", mode)->required()->check(CLI::IsMember({"ig", "ablate", "interactions", "communities"}));
  expl->add_option("--steps", steps, "IG integration steps");
  expl->add_option("--min-cooccurrence", min_co);
  expl->add_option("--top-hubs", top_hubs);
  expl->add_option("--out", out_path, "Output directory")->required();

  std::string runs_dir;
  auto* rep = app.add_subcommand("report", "Summarise test metrics across run directories");
  rep->add_option("--runs", runs_dir)->required();
  rep->add_option("--out", out_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  const LogLevel saved = log_level();
  log_level() = quiet ? LogLevel::Quiet : verbose ? LogLevel::Info : LogLevel::Warn;
  struct Restore {
    LogLevel l;
    ~Restore() { log_level() = l; }
  } restore{saved};

  try {
    configured_threads();
    RunConfig c;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      read_config(in, c, config_file);
    }
    if (*ingest) {
      cmd_ingest(vcf_dir, phenotypes, drug, out_path, out, err);
    } else if (*synth) {
      if (!spec_file.empty()) {
        std::ifstream in(spec_file);
        read_config(in, c, spec_file);
      }
      c.synth.seed = seed;
      cmd_synth(c, out_path, out);
    } else if (*trn) {
      c.model = model;
      if (model != "vampnet") {
        for (auto* o : {fusion_opt, masked_opt, no_path2_opt})
          if (o->count()) throw ConfigError(o->get_name() + " applies to --model vampnet only");
      } else if (alpha_opt->count()) {
        throw ConfigError("--chi2-alpha applies to --model mlp or cnn only");
      }
      if (!fusion.empty()) c.vampnet.fusion = fusion_from_string(fusion);
      if (!masked.empty()) c.vampnet.sab.masked = masked == "true";
      if (!augment.empty()) c.train.augment = augment == "true";
      if (no_path2) c.vampnet.use_path2 = false;
      if (chi2_alpha) c.chi2_alpha = *chi2_alpha;
      if (!optimizer.empty()) c.train.optimizer = optimizer_from_string(optimizer);
      if (lr) c.train.learning_rate = *lr;
      if (epochs) c.train.max_epochs = *epochs;
      if (search_budget) c.search_budget = *search_budget;
      c.train.seed = seed;
      cmd_train(c, cohort, out_path, out);
    } else if (*expl) {
      if (steps) c.ig_steps = *steps;
      if (min_co) c.min_cooccurrence = *min_co;
      cmd_explain(c, ckpt, cohort, mode, out_path, top_hubs, out);
    } else if (*rep) {
      cmd_report(runs_dir, out_path, out);
    }
  } catch (const Error& e) {
    err << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"vampnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace vampnet
