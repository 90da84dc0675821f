#include "oodgate/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <optional>

#include "oodgate/batch.hpp"
#include "oodgate/error.hpp"
#include "oodgate/experiments.hpp"
#include "oodgate/metrics.hpp"
#include "oodgate/oodf.hpp"
#include "oodgate/synthetic.hpp"

namespace oodgate::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Preset {
  const char* name;
  double p;
  double lambda;
};

// Operating points chosen on a Gaussian-noise validation set.
constexpr Preset kPresets[] = {
    {"cifar-densenet", 60.0, 1.6},
    {"cifar-resnet18", 60.0, 1.0},
    {"imagenet-resnet50", 30.0, 0.8},
    {"imagenet-mobilenet", 30.0, 0.2},
};

double parse_lambda(const std::string& s) {
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw UsageError("bad lambda '" + s + "'");
  return v;
}

// Options shared by fit, sweep and ablate.
struct ConfigOptions {
  std::optional<std::string> preset;
  std::optional<double> p;
  std::optional<std::string> lambda;
  std::optional<double> react_percentile;
  std::string method = "energy";
  double odin_temperature = 1000.0;
  bool no_mask = false;
  bool no_react = false;
  bool no_smooth = false;

  void attach(CLI::App& app, bool stage_flags) {
    std::vector<std::string> names;
    for (const auto& pr : kPresets) names.emplace_back(pr.name);
    app.add_option("--preset", preset, "Named (p, lambda) operating point")->check(CLI::IsMember(names));
    app.add_option("--p", p, "Masking percentile in [0, 100)");
    app.add_option("--lambda", lambda, "ReAct threshold (>= 0 or inf)");
    app.add_option("--react-percentile", react_percentile, "Resolve lambda as this percentile of train activations")
        ->excludes("--lambda");
    app.add_option("--method", method, "energy | msp | odin | mahalanobis | energy-react");
    app.add_option("--odin-temperature", odin_temperature, "Temperature for the odin method");
    if (stage_flags) {
      app.add_flag("--no-mask", no_mask, "Disable feature masking");
      app.add_flag("--no-react", no_react, "Disable ReAct clipping");
      app.add_flag("--no-smooth", no_smooth, "Disable logit smoothing");
    }
  }

  DetectorConfig resolve() const {
    DetectorConfig cfg;
    double pv = kPresets[0].p;
    double lv = kPresets[0].lambda;
    if (preset) {
      for (const auto& pr : kPresets) {
        if (*preset == pr.name) {
          pv = pr.p;
          lv = pr.lambda;
        }
      }
    }
    if (p) pv = *p;
    if (lambda) lv = parse_lambda(*lambda);
    cfg.masking_percentile = pv;
    if (react_percentile) {
      cfg.react = ReactPercentile{*react_percentile};
    } else {
      cfg.react = ReactExplicit{lv};
    }
    cfg.enable_mask = !no_mask;
    cfg.enable_react = !no_react;
    cfg.enable_smoothing = !no_smooth;
    try {
      cfg.method.kind = parse_score_kind(method);
      cfg.method.odin_temperature = odin_temperature;
      cfg.validate();
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }
};

json config_json(const DetectorConfig& cfg) {
  json j;
  j["masking_percentile"] = format_real(cfg.masking_percentile);
  if (const auto* e = std::get_if<ReactExplicit>(&cfg.react)) {
    j["react_mode"] = "explicit";
    j["react_value"] = format_real(e->lambda);
  } else {
    j["react_mode"] = "percentile";
    j["react_value"] = format_real(std::get<ReactPercentile>(cfg.react).q);
  }
  j["enable_mask"] = cfg.enable_mask;
  j["enable_react"] = cfg.enable_react;
  j["enable_smoothing"] = cfg.enable_smoothing;
  j["method"] = to_string(cfg.method.kind);
  j["odin_temperature"] = format_real(cfg.method.odin_temperature);
  return j;
}

struct Manifest {
  std::string subcommand;
  std::vector<std::string> argv;
  json inputs = json::object();
  json outputs = json::object();
  json config;
  std::optional<std::uint64_t> seed;

  void write(const fs::path& primary_out) const {
    json j;
    j["subcommand"] = subcommand;
    j["argv"] = argv;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["config"] = config.is_null() ? json::object() : config;
    j["seed"] = seed ? json(*seed) : json(nullptr);
    std::ofstream f(primary_out.string() + ".manifest.json", std::ios::trunc);
    if (!f) throw Error(ErrorCode::InvalidState, "cannot write manifest for " + primary_out.string());
    f << j.dump(2) << '\n';
  }
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::trunc);
  if (!f) throw Error(ErrorCode::InvalidState, "cannot open " + p.string() + " for writing");
  return f;
}

FeatureSet load_features(const fs::path& p, bool need_labels) {
  OodfContainer c = load_oodf(p);
  if (!c.features) throw Error(ErrorCode::InvalidContainer, p.string() + " has no FEAT section");
  if (need_labels && !c.features->labels) throw Error(ErrorCode::InvalidContainer, p.string() + " has no labels");
  return std::move(*c.features);
}

struct TrainData {
  ClassifierHead head;
  FeatureSet features;
};

TrainData load_train(const fs::path& p) {
  OodfContainer c = load_oodf(p);
  if (!c.head) throw Error(ErrorCode::InvalidContainer, p.string() + " has no HEAD section");
  if (!c.features || !c.features->labels) {
    throw Error(ErrorCode::InvalidContainer, p.string() + " needs a labelled FEAT section");
  }
  return {std::move(*c.head), std::move(*c.features)};
}

void require_width(const Matrix& m, std::size_t L, const std::string& what) {
  if (m.rows() > 0 && m.cols() != L) {
    throw Error(ErrorCode::InvalidDimension,
                what + " has width " + std::to_string(m.cols()) + ", detector expects " + std::to_string(L));
  }
}

fs::path sibling(const fs::path& out, const std::string& tag) {
  fs::path p = out;
  p.replace_extension();
  return fs::path(p.string() + "." + tag + ".oodf");
}

int threads_from_env(int fallback) {
  const char* env = std::getenv("OODGATE_THREADS");
  if (env == nullptr) return fallback;
  const std::string s(env);
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos || s.size() > 6 || std::stoi(s) < 1) {
    throw UsageError("OODGATE_THREADS must be a positive integer");
  }
  return std::stoi(s);
}

// Checks that a config is valid for feature width L (k in [1, L]).
std::size_t check_k(const DetectorConfig& cfg, std::size_t L) {
  try {
    return cfg.resolve_k(L);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Post-hoc OOD detection with feature masking, ReAct and logit smoothing", "oodgate"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate the seeded synthetic benchmark");
  std::string gen_spec;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out;
  std::optional<std::string> gen_out_id;
  std::optional<std::string> gen_out_ood;
  gen->add_option("--spec", gen_spec, "key=value list, e.g. L=512,C=10,n_id=200,n_ood=2000,sep=4,std=0.25,ood=offmask,strength=2");
  gen->add_option("--seed", gen_seed, "Seed (overrides seed= in --spec)");
  gen->add_option("--out", gen_out, "Train split output (.oodf)")->required();
  gen->add_option("--out-id", gen_out_id, "Test-ID split output (default <out>.id.oodf)");
  gen->add_option("--out-ood", gen_out_ood, "Test-OOD split output (default <out>.ood.oodf)");

  // fit
  auto* fitc = app.add_subcommand("fit", "Fit a detector on labelled training features");
  std::string fit_train;
  std::string fit_out;
  ConfigOptions fit_opts;
  fitc->add_option("--train", fit_train, "Training OODF (HEAD + labelled FEAT)")->required();
  fitc->add_option("--out", fit_out, "Detector output (.oodf)")->required();
  fit_opts.attach(*fitc, true);

  // score
  auto* scorec = app.add_subcommand("score", "Score samples with a fitted detector");
  std::string score_det;
  std::string score_in;
  std::string score_out;
  scorec->add_option("--detector", score_det)->required();
  scorec->add_option("--in", score_in)->required();
  scorec->add_option("--out", score_out)->required();

  // eval
  auto* evalc = app.add_subcommand("eval", "FPR95 / AUROC of a detector on ID vs OOD features");
  std::string eval_det;
  std::string eval_id;
  std::string eval_ood;
  std::string eval_out;
  std::optional<std::string> eval_baseline;
  evalc->add_option("--detector", eval_det)->required();
  evalc->add_option("--id", eval_id)->required();
  evalc->add_option("--ood", eval_ood)->required();
  evalc->add_option("--out", eval_out)->required();
  evalc->add_option("--baseline", eval_baseline, "Evaluate a baseline score on raw logits instead of the pipeline");

  // sweep
  auto* sweepc = app.add_subcommand("sweep", "Grid of evaluations over p, lambda and smoothing");
  std::string sw_train;
  std::string sw_id;
  std::string sw_ood;
  std::string sw_out;
  std::string sw_grid;
  std::string sw_method = "energy";
  double sw_odin_t = 1000.0;
  sweepc->add_option("--train", sw_train)->required();
  sweepc->add_option("--id", sw_id)->required();
  sweepc->add_option("--ood", sw_ood)->required();
  sweepc->add_option("--out", sw_out)->required();
  sweepc->add_option("--grid", sw_grid, "e.g. p=0:90:10,lambda=0.2:2.0:0.2,smooth=0:1:1")->required();
  sweepc->add_option("--method", sw_method);
  sweepc->add_option("--odin-temperature", sw_odin_t);

  // ablate
  auto* ablc = app.add_subcommand("ablate", "The six ReAct / FM / LS stage combinations");
  std::string ab_train;
  std::string ab_id;
  std::string ab_ood;
  std::string ab_out;
  ConfigOptions ab_opts;
  ablc->add_option("--train", ab_train)->required();
  ablc->add_option("--id", ab_id)->required();
  ablc->add_option("--ood", ab_ood)->required();
  ablc->add_option("--out", ab_out)->required();
  ab_opts.attach(*ablc, false);

  // diag
  auto* diagc = app.add_subcommand("diag", "Cosine and score histograms for ID and OOD sets");
  std::string dg_det;
  std::string dg_id;
  std::string dg_ood;
  std::string dg_out;
  std::size_t dg_bins = 50;
  diagc->add_option("--detector", dg_det)->required();
  diagc->add_option("--id", dg_id)->required();
  diagc->add_option("--ood", dg_ood)->required();
  diagc->add_option("--out", dg_out)->required();
  diagc->add_option("--bins", dg_bins)->check(CLI::PositiveNumber);

  // replay
  auto* replayc = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  std::string rp_manifest;
  replayc->add_option("--manifest", rp_manifest)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  Manifest manifest;
  manifest.argv = args;

  try {
    if (*gen) {
      manifest.subcommand = "gen";
      SyntheticSpec spec;
      try {
        spec = parse_synthetic_spec(gen_spec);
        if (gen_seed) spec.seed = *gen_seed;
        spec.validate();
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      const SyntheticDataset ds = gen_synthetic(spec);
      const fs::path out_train = gen_out;
      const fs::path out_id = gen_out_id ? fs::path(*gen_out_id) : sibling(out_train, "id");
      const fs::path out_ood = gen_out_ood ? fs::path(*gen_out_ood) : sibling(out_train, "ood");
      const auto meta = describe(spec);
      const auto save_split = [&](const fs::path& p, const Matrix& m, std::optional<std::vector<ClassIndex>> labels,
                                  const char* split) {
        OodfContainer c;
        c.L = spec.L;
        c.C = spec.C;
        c.head = ds.head;
        c.features = FeatureSet{m, std::move(labels)};
        c.meta = meta;
        c.meta["split"] = split;
        save_oodf(c, p);
      };
      save_split(out_train, ds.train, ds.train_labels, "train");
      save_split(out_id, ds.test_id, ds.test_id_labels, "test_id");
      save_split(out_ood, ds.test_ood, std::nullopt, "test_ood");
      manifest.outputs = {{"train", out_train.string()}, {"test_id", out_id.string()}, {"test_ood", out_ood.string()}};
      manifest.config = meta;
      manifest.seed = spec.seed;
      manifest.write(out_train);
      return kExitOk;
    }

    if (*fitc) {
      manifest.subcommand = "fit";
      const DetectorConfig cfg = fit_opts.resolve();
      const TrainData train = load_train(fit_train);
      check_k(cfg, train.head.feature_dim());
      const FittedDetector det = fit(train.features.rows, *train.features.labels, train.head, cfg);
      OodfContainer c = make_detector_container(det);
      c.meta["lambda"] = format_real(det.lambda);
      c.meta["k"] = std::to_string(det.masks.k());
      save_oodf(c, fit_out);
      manifest.inputs = {{"train", fit_train}};
      manifest.outputs = {{"detector", fit_out}};
      manifest.config = config_json(cfg);
      manifest.config["lambda_resolved"] = format_real(det.lambda);
      manifest.config["k"] = det.masks.k();
      manifest.write(fit_out);
      return kExitOk;
    }

    if (*scorec) {
      manifest.subcommand = "score";
      const FittedDetector det = detector_from_container(load_oodf(score_det));
      const FeatureSet fs_in = load_features(score_in, false);
      require_width(fs_in.rows, det.feature_dim(), score_in);
      const auto records = score_batch(det, fs_in.rows, Parallelism{threads_from_env(1)});
      auto f = open_out(score_out);
      for (std::size_t i = 0; i < records.size(); ++i) {
        f << i << '\t' << records[i].predicted_class << '\t' << format_real(records[i].cosine) << '\t'
          << format_real(records[i].score) << '\n';
      }
      f.close();
      manifest.inputs = {{"detector", score_det}, {"samples", score_in}};
      manifest.outputs = {{"scores", score_out}};
      manifest.config = config_json(det.config);
      manifest.write(score_out);
      return kExitOk;
    }

    if (*evalc) {
      manifest.subcommand = "eval";
      const FittedDetector det = detector_from_container(load_oodf(eval_det));
      const FeatureSet id = load_features(eval_id, false);
      const FeatureSet ood = load_features(eval_ood, false);
      require_width(id.rows, det.feature_dim(), eval_id);
      require_width(ood.rows, det.feature_dim(), eval_ood);
      const Parallelism par{threads_from_env(1)};
      EvalReport report;
      if (eval_baseline) {
        ScoreMethod m;
        try {
          m = ScoreMethod{parse_score_kind(*eval_baseline), det.config.method.odin_temperature};
        } catch (const Error& e) {
          throw UsageError(e.what());
        }
        report = evaluate(baseline_scores(det, id.rows, m, par), baseline_scores(det, ood.rows, m, par));
      } else {
        report = evaluate(pipeline_scores(det, id.rows, par), pipeline_scores(det, ood.rows, par));
      }
      auto f = open_out(eval_out);
      write_report(f, report);
      f.close();
      manifest.inputs = {{"detector", eval_det}, {"id", eval_id}, {"ood", eval_ood}};
      manifest.outputs = {{"report", eval_out}};
      manifest.config = config_json(det.config);
      if (eval_baseline) manifest.config["baseline"] = *eval_baseline;
      manifest.write(eval_out);
      return kExitOk;
    }

    if (*sweepc) {
      manifest.subcommand = "sweep";
      SweepGrid grid;
      DetectorConfig base;
      try {
        grid = parse_grid(sw_grid);
        base.method = ScoreMethod{parse_score_kind(sw_method), sw_odin_t};
        base.validate();
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      const int threads = threads_from_env(0);
      const TrainData train = load_train(sw_train);
      const FeatureSet id = load_features(sw_id, false);
      const FeatureSet ood = load_features(sw_ood, false);
      require_width(id.rows, train.head.feature_dim(), sw_id);
      require_width(ood.rows, train.head.feature_dim(), sw_ood);
      for (double p : grid.percentiles) {
        DetectorConfig probe = base;
        probe.masking_percentile = p;
        check_k(probe, train.head.feature_dim());
      }
      const Split split{train.features.rows, *train.features.labels, train.head, id.rows, ood.rows};
      const EvalReport baseline = evaluate_energy_baseline(split, Parallelism{1});
      const auto cells = sweep(split, grid, base, Parallelism{threads});
      auto f = open_out(sw_out);
      f << "cell\tp\tlambda\tsmoothing\tfpr95\tauroc\tgamma\n";
      f << "baseline\t" << format_real(0.0) << '\t' << format_real(std::numeric_limits<double>::infinity())
        << "\t0\t" << format_real(baseline.fpr95) << '\t' << format_real(baseline.auroc) << '\t'
        << format_real(baseline.gamma) << '\n';
      for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        f << i << '\t' << format_real(c.percentile) << '\t' << format_real(c.lambda) << '\t' << (c.smoothing ? 1 : 0)
          << '\t' << format_real(c.report.fpr95) << '\t' << format_real(c.report.auroc) << '\t'
          << format_real(c.report.gamma) << '\n';
      }
      f.close();
      manifest.inputs = {{"train", sw_train}, {"id", sw_id}, {"ood", sw_ood}};
      manifest.outputs = {{"sweep", sw_out}};
      manifest.config = config_json(base);
      manifest.config["grid"] = sw_grid;
      manifest.write(sw_out);
      return kExitOk;
    }

    if (*ablc) {
      manifest.subcommand = "ablate";
      const DetectorConfig cfg = ab_opts.resolve();
      const TrainData train = load_train(ab_train);
      const FeatureSet id = load_features(ab_id, false);
      const FeatureSet ood = load_features(ab_ood, false);
      require_width(id.rows, train.head.feature_dim(), ab_id);
      require_width(ood.rows, train.head.feature_dim(), ab_ood);
      check_k(cfg, train.head.feature_dim());
      const Split split{train.features.rows, *train.features.labels, train.head, id.rows, ood.rows};
      const auto rows = ablate(split, cfg, Parallelism{threads_from_env(1)});
      auto f = open_out(ab_out);
      f << "react\tfm\tls\tfpr95\tauroc\tgamma\n";
      for (const auto& r : rows) {
        f << (r.react ? 1 : 0) << '\t' << (r.mask ? 1 : 0) << '\t' << (r.smoothing ? 1 : 0) << '\t'
          << format_real(r.report.fpr95) << '\t' << format_real(r.report.auroc) << '\t' << format_real(r.report.gamma)
          << '\n';
      }
      f.close();
      manifest.inputs = {{"train", ab_train}, {"id", ab_id}, {"ood", ab_ood}};
      manifest.outputs = {{"ablation", ab_out}};
      manifest.config = config_json(cfg);
      manifest.write(ab_out);
      return kExitOk;
    }

    if (*diagc) {
      manifest.subcommand = "diag";
      const FittedDetector det = detector_from_container(load_oodf(dg_det));
      const FeatureSet id = load_features(dg_id, false);
      const FeatureSet ood = load_features(dg_ood, false);
      require_width(id.rows, det.feature_dim(), dg_id);
      require_width(ood.rows, det.feature_dim(), dg_ood);
      const Parallelism par{threads_from_env(1)};
      const auto rid = score_batch(det, id.rows, par);
      const auto rood = score_batch(det, ood.rows, par);
      const auto pick = [](const std::vector<ScoreRecord>& rs, bool cosine) {
        std::vector<double> v;
        v.reserve(rs.size());
        for (const auto& r : rs) v.push_back(cosine ? r.cosine : r.score);
        return v;
      };
      const auto cid = pick(rid, true);
      const auto cood = pick(rood, true);
      const auto sid = pick(rid, false);
      const auto sood = pick(rood, false);
      const EvalReport cos_report = evaluate(cid, cood);
      const EvalReport score_report = evaluate(sid, sood);
      std::vector<double> all_scores = sid;
      all_scores.insert(all_scores.end(), sood.begin(), sood.end());
      const Histogram span_hist = histogram(all_scores, 1);
      const std::pair<double, double> score_range{span_hist.bin_edges.front(), span_hist.bin_edges.back()};
      auto f = open_out(dg_out);
      f << "cosine_fpr95\t" << format_real(cos_report.fpr95) << '\n'
        << "cosine_auroc\t" << format_real(cos_report.auroc) << '\n'
        << "score_fpr95\t" << format_real(score_report.fpr95) << '\n'
        << "score_auroc\t" << format_real(score_report.auroc) << '\n';
      write_histogram(f, histogram(cid, dg_bins, std::pair{-1.0, 1.0}), "cosine_id");
      write_histogram(f, histogram(cood, dg_bins, std::pair{-1.0, 1.0}), "cosine_ood");
      write_histogram(f, histogram(sid, dg_bins, score_range), "score_id");
      write_histogram(f, histogram(sood, dg_bins, score_range), "score_ood");
      f.close();
      manifest.inputs = {{"detector", dg_det}, {"id", dg_id}, {"ood", dg_ood}};
      manifest.outputs = {{"diag", dg_out}};
      manifest.config = config_json(det.config);
      manifest.config["bins"] = dg_bins;
      manifest.write(dg_out);
      return kExitOk;
    }

    if (*replayc) {
      std::ifstream f(rp_manifest);
      if (!f) throw Error(ErrorCode::InvalidInput, "cannot open manifest " + rp_manifest);
      json j;
      try {
        j = json::parse(f);
      } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("bad manifest: ") + e.what());
      }
      if (!j.contains("argv") || !j["argv"].is_array()) throw Error(ErrorCode::InvalidInput, "manifest has no argv");
      const auto argv = j["argv"].get<std::vector<std::string>>();
      if (!argv.empty() && argv.front() == "replay") throw UsageError("refusing to replay a replay");
      return run(argv, out, err);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDataError;
  }
  return kExitUsage;
}

}  // namespace oodgate::cli
