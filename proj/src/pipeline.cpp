#include "sinodenoise/pipeline.hpp"

#include "sinodenoise/container.hpp"
#include "sinodenoise/ct_physics.hpp"
#include "sinodenoise/inference.hpp"
#include "sinodenoise/metrics.hpp"
#include "sinodenoise/noise_model.hpp"
#include "sinodenoise/png_io.hpp"
#include "sinodenoise/tomo_sim.hpp"
#include "sinodenoise/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

namespace sd::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const std::set<std::string>& allowed_config_keys() {
  static const std::set<std::string> keys = {
      // bench / simulate
      "phantom_size", "n_phantom_rows", "n_angles", "n_detector_cols",
      "detector_spacing", "flux_per_ma_max", "bowtie_width", "ma_min", "ma_max",
      "ma_cycles", "sigma_e2", "alpha_list", "seed", "out_dir",
      // pretrain-noise
      "dataset", "noise_hidden", "pretrain_epochs", "pretrain_lr",
      "pretrain_gate_rmsre", "pretrain_train_currents", "pretrain_heldout_currents",
      // train
      "clean_dataset", "regime", "noise_checkpoint", "constant_lambda",
      "constant_lambda_value", "sigma_e2_init", "k", "feat_channels", "feat_depth",
      "lstm_channels", "head_channels", "head_depth", "se_hidden", "trunk_depth",
      "trunk_channels", "mix_channels", "linear_mu", "learning_rate", "batch_size",
      "patch_size", "plateau_patience", "max_epochs", "steps_per_epoch",
      "freeze_noise_layers", "margin",
      // denoise / reconstruct / evaluate / cross-test
      "checkpoint", "passthrough", "image_size", "result", "reference",
      "dataset_label", "dose_label", "regime_label", "emit_panels", "run_dir",
      "cross_regimes", "train_alphas", "test_alphas", "cross_metric",
  };
  return keys;
}

std::string alpha_tag(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", alpha);
  return buf;
}

namespace {

std::uint64_t command_hash(const config::Config& cfg, std::uint64_t seed,
                           const std::string& command) {
  std::string blob = command + "#" + std::to_string(seed);
  for (const auto& [k, v] : cfg.values()) blob += "|" + k + "=" + v;
  return container::fnv1a_hash(blob.data(), blob.size());
}

std::string provenance(const std::string& command, std::uint64_t seed,
                       std::uint64_t hash, const std::string& parents) {
  return command + "(seed=" + std::to_string(seed) +
         ", cmd=" + std::to_string(hash) + ") <- [" + parents + "]";
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw ValidationError("cannot open for writing: " + p.string());
  out << text;
}

FrameStack generic_stack(const container::Dataset& ds) {
  FrameStack s;
  s.frames = int(ds.meta.frames);
  s.rows = int(ds.meta.rows);
  s.cols = int(ds.meta.cols);
  s.data = ds.data;
  s.meta.tube_current = ds.meta.tube_current;
  s.meta.incident_flux = ds.meta.incident_flux;
  s.meta.dose_fraction = ds.meta.dose_fraction;
  s.meta.electronic_variance = ds.meta.electronic_variance;
  s.meta.electronic_mean = ds.meta.electronic_mean;
  return s;
}

std::vector<double> ma_schedule_from(const config::Config& cfg, int n_frames) {
  const double lo = cfg.get_double("ma_min", 50.0);
  const double hi = cfg.get_double("ma_max", 400.0);
  const double cycles = cfg.get_double("ma_cycles", 2.0);
  if (!(lo > 0.0) || !(hi >= lo)) throw ConfigError("invalid ma_min/ma_max");
  std::vector<double> out(std::size_t(n_frames), 0.0);
  for (int f = 0; f < n_frames; ++f) {
    const double phase = 2.0 * M_PI * cycles * double(f) / double(n_frames);
    out[std::size_t(f)] = lo + (hi - lo) * 0.5 * (1.0 + std::sin(phase));
  }
  return out;
}

container::Checkpoint noise_to_checkpoint(noise_model::NoiseModel& nm,
                                          std::uint64_t seed) {
  container::Checkpoint ckpt;
  ckpt.architecture = "noise_model";
  ckpt.seed = seed;
  ckpt.hyperparams["noise_n_cols"] = std::to_string(nm.n_cols());
  ckpt.hyperparams["noise_hidden"] = std::to_string(nm.hidden());
  ckpt.hyperparams["noise_frozen"] = nm.lambda_frozen() ? "1" : "0";
  ckpt.hyperparams["noise_constant"] = nm.constant_lambda_mode() ? "1" : "0";
  for (const auto& nv : nm.named_parameters()) {
    container::CheckpointTensor t;
    t.name = nv.name;
    t.shape = {std::int64_t(nv.data->size())};
    for (double x : *nv.data) t.values.push_back(float(x));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

noise_model::NoiseModel noise_from_checkpoint(const container::Checkpoint& ckpt) {
  if (ckpt.architecture != "noise_model")
    throw ValidationError("expected a noise_model checkpoint, got '" +
                          ckpt.architecture + "'");
  const auto geti = [&](const std::string& key) {
    const auto it = ckpt.hyperparams.find(key);
    if (it == ckpt.hyperparams.end())
      throw ValidationError("noise checkpoint missing '" + key + "'");
    return std::stoi(it->second);
  };
  noise_model::NoiseModel nm(geti("noise_n_cols"), geti("noise_hidden"));
  for (const auto& nv : nm.named_parameters()) {
    const auto* t = ckpt.find(nv.name);
    if (!t) throw ValidationError("noise checkpoint missing tensor '" + nv.name + "'");
    if (t->values.size() != nv.data->size())
      throw ValidationError("noise checkpoint tensor '" + nv.name + "' wrong size");
    for (std::size_t i = 0; i < t->values.size(); ++i)
      (*nv.data)[i] = double(t->values[i]);
  }
  nm.set_lambda_frozen(geti("noise_frozen") != 0);
  nm.set_constant_lambda_mode(geti("noise_constant") != 0);
  return nm;
}

networks::NetConfig net_config_from(const config::Config& cfg) {
  networks::NetConfig nc;
  nc.k = int(cfg.get_int("k", nc.k));
  nc.feat_channels = int(cfg.get_int("feat_channels", nc.feat_channels));
  nc.feat_depth = int(cfg.get_int("feat_depth", nc.feat_depth));
  nc.lstm_channels = int(cfg.get_int("lstm_channels", nc.lstm_channels));
  nc.head_channels = int(cfg.get_int("head_channels", nc.head_channels));
  nc.head_depth = int(cfg.get_int("head_depth", nc.head_depth));
  nc.se_hidden = int(cfg.get_int("se_hidden", nc.se_hidden));
  nc.trunk_depth = int(cfg.get_int("trunk_depth", nc.trunk_depth));
  nc.trunk_channels = int(cfg.get_int("trunk_channels", nc.trunk_channels));
  nc.mix_channels = int(cfg.get_int("mix_channels", nc.mix_channels));
  nc.linear_mu = cfg.get_bool("linear_mu", nc.linear_mu);
  return nc;
}

training::TrainConfig train_config_from(const config::Config& cfg,
                                        const std::string& regime,
                                        std::uint64_t seed, int workers) {
  training::TrainConfig tc;
  tc.regime = regime;
  tc.learning_rate = cfg.get_double("learning_rate", tc.learning_rate);
  const bool supervised = (regime == "noise2clean" || regime == "half2half");
  tc.batch_size = int(cfg.get_int("batch_size", supervised ? 64 : 16));
  tc.patch_size = int(cfg.get_int("patch_size", tc.patch_size));
  tc.plateau_patience = int(cfg.get_int("plateau_patience", tc.plateau_patience));
  tc.max_epochs = int(cfg.get_int("max_epochs", tc.max_epochs));
  tc.steps_per_epoch = int(cfg.get_int("steps_per_epoch", tc.steps_per_epoch));
  tc.freeze_noise_layers = cfg.get_bool("freeze_noise_layers", true);
  tc.margin = int(cfg.get_int("margin", tc.margin));
  tc.seed = seed;
  tc.workers = workers;
  return tc;
}

} // namespace

// --- simulate ------------------------------------------------------------------

int cmd_simulate(const config::Config& cfg, std::uint64_t seed, const fs::path& out) {
  const int n = int(cfg.get_int("phantom_size", 256));
  const int n_rows = int(cfg.get_int("n_phantom_rows", 40));
  const int n_angles = int(cfg.get_int("n_angles", 360));
  const int n_cols = int(cfg.get_int("n_detector_cols", 384));
  const double spacing = cfg.get_double("detector_spacing", 2.0 * 2.0 / double(n_cols));
  const double f_max = cfg.get_double("flux_per_ma_max", 2e3);
  const double width = cfg.get_double("bowtie_width", 0.35);
  const double sigma_e2 = cfg.get_double("sigma_e2", 100.0);
  const auto alphas = cfg.get_double_list("alpha_list", {0.25});
  for (double a : alphas)
    if (!(a > 0.0 && a <= 1.0)) throw ConfigError("alpha_list entries must be in (0,1]");

  const std::uint64_t hash = command_hash(cfg, seed, "simulate");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    std::cerr << "simulate: cannot create output dir " << out << "\n";
    return kExitConfig;
  }

  std::cout << "simulate: " << n_rows << " phantoms, " << n_angles << " angles, "
            << n_cols << " columns\n";
  Rng rng(seed);
  std::vector<PhantomImage> phantoms;
  for (int r = 0; r < n_rows; ++r)
    phantoms.push_back(tomo_sim::shepp_logan_phantom(
        n, seed ^ (0x5eed0000ULL + std::uint64_t(r) + 1)));

  auto geom = ScanGeometry::uniform(n_angles, n_cols, spacing);
  const auto flux_per_ma = ct_physics::bowtie_flux_profile(n_cols, 1.0, f_max, width);
  const auto schedule = ma_schedule_from(cfg, n_angles);

  auto data = tomo_sim::make_sequence_dataset(phantoms, geom, flux_per_ma, schedule,
                                              sigma_e2, 1.0, seed ^ 0xF00DULL);

  auto clean_ds = container::from_stack(data.clean, "projection", seed,
                                        provenance("simulate", seed, hash, "phantoms"));
  container::write_dataset(out / "clean", clean_ds);

  auto full_ds = container::from_stack(
      data.noisy, "transmission", seed,
      provenance("simulate", seed, hash, (out / "clean").string()));
  container::write_dataset(out / "full_dose", full_ds);

  for (double a : alphas) {
    auto low = ct_physics::simulate_low_dose(
        data.noisy, a, seed ^ container::fnv1a_hash(&a, sizeof(a)));
    auto low_ds = container::from_stack(
        low, "transmission", seed,
        provenance("simulate", seed, hash, (out / "full_dose").string()));
    container::write_dataset(out / ("low_dose_" + alpha_tag(a)), low_ds);
    std::cout << "simulate: wrote low_dose_" << alpha_tag(a) << "\n";
  }
  std::cout << "simulate: done -> " << out << "\n";
  return kExitOk;
}

// --- pretrain-noise ------------------------------------------------------------

int cmd_pretrain_noise(const config::Config& cfg, std::uint64_t seed,
                       const fs::path& out) {
  const auto ds = container::read_dataset(cfg.get_string("dataset"));
  if (ds.meta.incident_flux.empty())
    throw ValidationError("pretrain-noise: dataset has no incident flux calibration");
  const int n_cols = int(ds.meta.cols);
  const int hidden = int(cfg.get_int("noise_hidden", 16));
  const int epochs = int(cfg.get_int("pretrain_epochs", 1000));
  const double lr = cfg.get_double("pretrain_lr", 1e-2);
  const double gate = cfg.get_double("pretrain_gate_rmsre", 2.0);

  // flux profiles at a spread of scheduled currents; middle current held out
  std::vector<double> currents = ds.meta.tube_current;
  std::sort(currents.begin(), currents.end());
  currents.erase(std::unique(currents.begin(), currents.end()), currents.end());
  if (currents.empty()) throw ValidationError("pretrain-noise: empty current schedule");

  auto pick = [&](double q) {
    return currents[std::size_t(q * double(currents.size() - 1))];
  };
  std::vector<double> train_mas =
      cfg.get_double_list("pretrain_train_currents",
                          {pick(0.0), pick(0.3), pick(0.7), pick(1.0)});
  std::vector<double> held_mas =
      cfg.get_double_list("pretrain_heldout_currents", {pick(0.5)});

  auto profile_at = [&](double ma) {
    noise_model::FluxSample s;
    s.ma = ma;
    s.flux.resize(std::size_t(n_cols));
    for (int c = 0; c < n_cols; ++c)
      s.flux[std::size_t(c)] = ma * ds.meta.incident_flux[std::size_t(c)];
    return s;
  };
  std::vector<noise_model::FluxSample> train, held;
  for (double ma : train_mas) train.push_back(profile_at(ma));
  for (double ma : held_mas) held.push_back(profile_at(ma));

  noise_model::NoiseModel nm(n_cols, hidden);
  auto report = nm.pretrain(train, held, epochs, lr);
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "pretrain-noise: train RMSRE " << report.train_rmsre
            << "%, held-out RMSRE " << report.heldout_rmsre << "%\n";

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    std::cerr << "pretrain-noise: cannot create output dir " << out << "\n";
    return kExitConfig;
  }
  container::write_checkpoint(out / "noise_model", noise_to_checkpoint(nm, seed));
  json rep;
  rep["train_rmsre_pct"] = report.train_rmsre;
  rep["heldout_rmsre_pct"] = report.heldout_rmsre;
  rep["epochs"] = report.epochs;
  rep["warnings"] = report.warnings;
  write_text(out / "pretrain_report.json", rep.dump(2) + "\n");

  if (!(report.heldout_rmsre <= gate)) {
    std::cerr << "pretrain-noise: held-out RMSRE " << report.heldout_rmsre
              << "% exceeds the " << gate << "% gate\n";
    return kExitGate;
  }
  return kExitOk;
}

// --- train ----------------------------------------------------------------------

int cmd_train(const config::Config& cfg, std::uint64_t seed, const fs::path& out,
              const std::string& regime_arg, int workers) {
  const std::string regime =
      regime_arg.empty() ? cfg.get_string("regime") : regime_arg;

  tomo_sim::SequenceDataset data;
  auto noisy_ds = container::read_dataset(cfg.get_string("dataset"));
  data.noisy = container::to_transmission_stack(noisy_ds);
  if (regime == "noise2clean") {
    if (!cfg.has("clean_dataset"))
      throw ConfigError("regime noise2clean requires clean_dataset");
    data.clean =
        container::to_projection_stack(container::read_dataset(cfg.get_string("clean_dataset")));
    if (data.clean.frames != data.noisy.frames || data.clean.rows != data.noisy.rows ||
        data.clean.cols != data.noisy.cols)
      throw ValidationError("clean/noisy dataset shapes differ");
  }

  auto net_cfg = net_config_from(cfg);
  auto model = training::Model::create(regime, net_cfg, seed);

  if (regime == "n2ntd_anm" || regime == "noise2void_4r") {
    if (cfg.get_bool("constant_lambda", false)) {
      noise_model::NoiseModel nm(data.noisy.cols, int(cfg.get_int("noise_hidden", 16)));
      nm.set_constant_lambda_mode(true);
      nm.set_constant_lambda_value(cfg.get_double("constant_lambda_value", 1e3));
      model.noise = std::move(nm);
    } else {
      if (!cfg.has("noise_checkpoint"))
        throw ConfigError("regime " + regime + " requires noise_checkpoint");
      model.noise = noise_from_checkpoint(
          container::read_checkpoint(cfg.get_string("noise_checkpoint")));
      if (model.noise->n_cols() != data.noisy.cols)
        throw ValidationError("noise model width does not match the dataset");
    }
    if (cfg.has("sigma_e2_init"))
      model.noise->set_sigma_e2(cfg.get_double("sigma_e2_init"));
  }

  auto tc = train_config_from(cfg, regime, seed, workers);
  std::cout << "train: regime " << regime << ", "
            << networks::total_param_count(model.params()) << " parameters, "
            << tc.max_epochs << " epochs max\n";
  auto result = training::train(model, data, tc);
  std::cout << "train: ran " << result.epochs_run << " epochs, best val loss "
            << result.best_val_loss << "\n";

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    std::cerr << "train: cannot create output dir " << out << "\n";
    return kExitConfig;
  }
  container::write_checkpoint(out / "checkpoint", model.to_checkpoint(seed));
  write_text(out / "training_log.json", training::epoch_log_json(result.log) + "\n");
  std::cout << "train: wrote " << (out / "checkpoint") << "\n";
  return kExitOk;
}

// --- denoise --------------------------------------------------------------------

int cmd_denoise(const config::Config& cfg, std::uint64_t seed, const fs::path& out) {
  auto model = training::Model::from_checkpoint(
      container::read_checkpoint(cfg.get_string("checkpoint")));
  auto noisy_ds = container::read_dataset(cfg.get_string("dataset"));
  auto noisy = container::to_transmission_stack(noisy_ds);

  inference::DenoiseOptions opts;
  opts.passthrough = cfg.get_bool("passthrough", false);
  auto denoised = inference::denoise_stack(model, noisy, opts);

  const std::uint64_t hash = command_hash(cfg, seed, "denoise");
  auto out_ds = container::from_stack(
      denoised, "projection", seed,
      provenance("denoise", seed, hash,
                 cfg.get_string("dataset") + ", " + cfg.get_string("checkpoint")));
  container::write_dataset(out / "denoised", out_ds);
  std::cout << "denoise: wrote " << (out / "denoised") << "\n";
  return kExitOk;
}

// --- reconstruct ------------------------------------------------------------------

int cmd_reconstruct(const config::Config& cfg, std::uint64_t seed, const fs::path& out) {
  auto ds = container::read_dataset(cfg.get_string("dataset"));
  if (ds.meta.domain != "projection")
    throw ValidationError("reconstruct expects a projection-domain container");
  auto sino_stack = container::to_projection_stack(ds);
  const int n = int(cfg.get_int("image_size", cfg.get_int("phantom_size", 256)));
  const double spacing =
      cfg.get_double("detector_spacing", 2.0 * 2.0 / double(sino_stack.cols));
  auto geom = ScanGeometry::uniform(sino_stack.frames, sino_stack.cols, spacing);

  // each detector row holds an independent object's sinogram
  FrameStack images;
  images.frames = sino_stack.rows;
  images.rows = n;
  images.cols = n;
  images.data.resize(std::size_t(sino_stack.rows) * n * n);
  for (int row = 0; row < sino_stack.rows; ++row) {
    ProjectionStack sino;
    sino.frames = sino_stack.frames;
    sino.rows = 1;
    sino.cols = sino_stack.cols;
    sino.data.resize(std::size_t(sino.frames) * sino.cols);
    for (int f = 0; f < sino.frames; ++f)
      for (int c = 0; c < sino.cols; ++c) sino.at(f, 0, c) = sino_stack.at(f, row, c);
    auto img = tomo_sim::fbp_reconstruct(sino, geom, n);
    std::copy(img.data.begin(), img.data.end(),
              images.data.begin() + std::size_t(row) * n * n);
  }

  const std::uint64_t hash = command_hash(cfg, seed, "reconstruct");
  auto out_ds = container::from_stack(
      images, "image", seed,
      provenance("reconstruct", seed, hash, cfg.get_string("dataset")));
  container::write_dataset(out / "reconstructed", out_ds);
  std::cout << "reconstruct: wrote " << (out / "reconstructed") << " (" << images.frames
            << " slices)\n";
  return kExitOk;
}

// --- evaluate ---------------------------------------------------------------------

int cmd_evaluate(const config::Config& cfg, std::uint64_t seed, const fs::path& out) {
  auto result_ds = container::read_dataset(cfg.get_string("result"));
  auto ref_ds = container::read_dataset(cfg.get_string("reference"));
  if (result_ds.meta.domain != ref_ds.meta.domain)
    throw ValidationError("evaluate: result/reference domains differ");

  auto result_stack = generic_stack(result_ds);
  auto ref_stack = generic_stack(ref_ds);
  auto rows = metrics::evaluate_pair(result_stack, ref_stack, result_ds.meta.domain,
                                     cfg.get_string("dataset_label", ""),
                                     cfg.get_string("dose_label", ""),
                                     cfg.get_string("regime_label", ""));

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    std::cerr << "evaluate: cannot create output dir " << out << "\n";
    return kExitConfig;
  }
  std::string csv = "dataset,dose,regime,domain,metric,mean,stddev,data_range\n";
  json jrows = json::array();
  for (const auto& r : rows) {
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%s,%s,%s,%s,%.9g,%.9g,%.9g\n",
                  r.dataset.c_str(), r.dose.c_str(), r.regime.c_str(),
                  r.domain.c_str(), r.metric.c_str(), r.mean, r.stddev, r.data_range);
    csv += line;
    jrows.push_back({{"dataset", r.dataset},
                     {"dose", r.dose},
                     {"regime", r.regime},
                     {"domain", r.domain},
                     {"metric", r.metric},
                     {"mean", r.mean},
                     {"stddev", r.stddev},
                     {"data_range", r.data_range}});
    std::cout << "evaluate: " << r.metric << " = " << r.mean << " +- " << r.stddev
              << "\n";
  }
  write_text(out / "report.csv", csv);
  write_text(out / "report.json", jrows.dump(2) + "\n");

  if (cfg.get_bool("emit_panels", true) && result_stack.frames > 0) {
    const int rws = result_stack.rows, cls = result_stack.cols;
    std::vector<float> a(result_stack.data.begin(), result_stack.data.begin() + rws * cls);
    std::vector<float> b(ref_stack.data.begin(), ref_stack.data.begin() + rws * cls);
    const auto [lo, hi] = std::minmax_element(b.begin(), b.end());
    png_io::write_panel_png(out / "comparison.png", {&a, &b}, rws, cls, *lo,
                            *hi > *lo ? *hi : *lo + 1.0f);
  }
  (void)seed;
  return kExitOk;
}

// --- cross-test ---------------------------------------------------------------------

int cmd_cross_test(const config::Config& cfg, std::uint64_t seed, const fs::path& out) {
  const fs::path run_dir = cfg.get_string("run_dir");
  const auto regimes = cfg.get_string_list(
      "cross_regimes", {"n2ntd_anm", "n2ntd_mse_ablation", "noise2clean", "half2half"});
  const auto train_alphas = cfg.get_double_list("train_alphas", {0.25, 0.05});
  const auto test_alphas = cfg.get_double_list("test_alphas", {0.25, 0.1, 0.05});
  const std::string metric = cfg.get_string("cross_metric", "psnr");

  auto clean = container::to_projection_stack(
      container::read_dataset(run_dir / "data" / "clean"));

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) {
    std::cerr << "cross-test: cannot create output dir " << out << "\n";
    return kExitConfig;
  }

  auto quartiles = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
      const double pos = p * double(v.size() - 1);
      const std::size_t i = std::size_t(pos);
      const double frac = pos - double(i);
      return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
    };
    return json{{"min", q(0.0)}, {"q1", q(0.25)}, {"median", q(0.5)},
                {"q3", q(0.75)}, {"max", q(1.0)}};
  };

  json report;
  report["metric"] = metric;
  report["cells"] = json::array();
  std::vector<std::string> warnings;

  for (double ta : test_alphas) {
    const fs::path test_dir = run_dir / "data" / ("low_dose_" + alpha_tag(ta));
    if (!fs::exists(test_dir / "meta.json")) {
      warnings.push_back("missing test set " + test_dir.string());
      continue;
    }
    auto noisy = container::to_transmission_stack(container::read_dataset(test_dir));

    std::vector<std::string> labels;
    std::vector<std::vector<double>> groups;

    // noisy baseline
    {
      auto noisy_proj = ct_physics::transmission_to_projection(noisy);
      auto vals = metrics::per_frame_metric(noisy_proj, clean, metric);
      report["cells"].push_back({{"regime", "noisy"},
                                 {"train_alpha", nullptr},
                                 {"test_alpha", ta},
                                 {"present", true},
                                 {"quartiles", quartiles(vals)}});
      labels.push_back("noisy");
      groups.push_back(vals);
    }

    for (const auto& regime : regimes)
      for (double tra : train_alphas) {
        const std::string cell = regime + "_a" + alpha_tag(tra);
        const fs::path ckpt_dir = run_dir / "checkpoints" / cell / "checkpoint";
        json jcell = {{"regime", regime},
                      {"train_alpha", tra},
                      {"test_alpha", ta},
                      {"present", false}};
        if (!fs::exists(ckpt_dir / "manifest.json")) {
          warnings.push_back("missing checkpoint " + ckpt_dir.string());
          report["cells"].push_back(jcell);
          continue;
        }
        auto model =
            training::Model::from_checkpoint(container::read_checkpoint(ckpt_dir));
        auto denoised = inference::denoise_stack(model, noisy);
        auto vals = metrics::per_frame_metric(denoised, clean, metric);
        jcell["present"] = true;
        jcell["quartiles"] = quartiles(vals);
        report["cells"].push_back(jcell);
        labels.push_back(cell);
        groups.push_back(vals);
        std::cout << "cross-test: " << cell << " @ test " << alpha_tag(ta) << " median "
                  << metric << " " << jcell["quartiles"]["median"] << "\n";
      }

    if (!groups.empty())
      png_io::write_box_plot_png(out / ("boxplot_test_" + alpha_tag(ta) + ".png"),
                                 labels, groups);
  }

  report["warnings"] = warnings;
  report["seed"] = seed;
  write_text(out / "cross_report.json", report.dump(2) + "\n");
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "cross-test: wrote " << (out / "cross_report.json") << "\n";
  return kExitOk;
}

// --- dispatch ------------------------------------------------------------------------

int run_command(const CommandArgs& args) {
  try {
    const auto cfg = config::Config::parse_file(args.config_path, allowed_config_keys());
    const std::uint64_t seed =
        args.seed ? *args.seed : std::uint64_t(cfg.get_int("seed", 0));
    const fs::path out = args.out_dir ? fs::path(*args.out_dir)
                                      : fs::path(cfg.get_string("out_dir", "out"));

    if (args.command == "simulate") return cmd_simulate(cfg, seed, out);
    if (args.command == "pretrain-noise") return cmd_pretrain_noise(cfg, seed, out);
    if (args.command == "train")
      return cmd_train(cfg, seed, out, args.regime, args.workers);
    if (args.command == "denoise") return cmd_denoise(cfg, seed, out);
    if (args.command == "reconstruct") return cmd_reconstruct(cfg, seed, out);
    if (args.command == "evaluate") return cmd_evaluate(cfg, seed, out);
    if (args.command == "cross-test") return cmd_cross_test(cfg, seed, out);
    std::cerr << "unknown command: " << args.command << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << args.command << ": " << e.what() << "\n";
    return kExitConfig;
  }
}

} // namespace sd::pipeline
