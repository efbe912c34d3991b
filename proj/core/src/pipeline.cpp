#include "oadn/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "oadn/errors.hpp"
#include "oadn/io.hpp"
#include "oadn/metrics.hpp"
#include "oadn/phantom.hpp"
#include "oadn/recon.hpp"
#include "oadn/unmix.hpp"
#include "oadn/version.hpp"

namespace oadn {

namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

namespace {

double elapsed_s(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

void note(const ProgressFn& progress, const std::string& msg) {
  if (progress) progress(msg);
}

std::string zero_pad(std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, v);
  return buf;
}

KeyValueFile base_manifest(const PipelineConfig& cfg, const std::string& command) {
  KeyValueFile m;
  m.set("toolkit_version", std::string(kVersion));
  m.set("command", command);
  m.set("config_hash", config_hash(cfg));
  return m;
}

ChannelMask config_mask(const PipelineConfig& cfg) {
  if (cfg.excluded_channels.empty()) return {};
  return ChannelMask::excluding(cfg.geometry.n_transducers, cfg.excluded_channels);
}

struct CsvWriter {
  std::ofstream out;
  explicit CsvWriter(const fs::path& path, const std::string& header)
      : out(path) {
    if (!out) throw DataError("cannot open for writing: " + path.string());
    out << header << "\n";
  }
  void row(const std::string& line) { out << line << "\n"; }
};

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open: " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return Rng::fnv1a64(ss.str());
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) return files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext)
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

// ---------------------------------------------------------------------------
// make-dataset

namespace {

void normalize_peak(Sinogram& s, double target) {
  double peak = 0.0;
  for (double v : s.data) peak = std::max(peak, std::abs(v));
  if (peak > 0.0) {
    const double f = target / peak;
    for (double& v : s.data) v *= f;
  }
}

struct SplitSpec {
  std::string name;
  std::size_t begin, count;
};

}  // namespace

void cmd_make_dataset(const PipelineConfig& cfg, const fs::path& image_dir,
                      const fs::path& out_dir, const ProgressFn& progress) {
  cfg.validate();
  const auto t0 = clock_type::now();
  auto images = list_files(image_dir, ".pgm");
  const std::size_t need = cfg.n_train + cfg.n_val + cfg.n_test;
  if (images.size() < need)
    throw DataError("make-dataset: split sizes need " + std::to_string(need) +
                    " images, found " + std::to_string(images.size()) + " in " +
                    image_dir.string());
  images.resize(need);

  note(progress, "simulating " + std::to_string(need) + " sinograms");
  const ForwardOperator op = cfg.make_operator();
  CorpusResult corpus = simulate_corpus(images, op, cfg.seed, cfg.augment);
  if (corpus.sinograms.size() < need)
    throw DataError("make-dataset: only " + std::to_string(corpus.sinograms.size()) +
                    " of " + std::to_string(need) + " images were decodable");

  KeyValueFile manifest = base_manifest(cfg, "make-dataset");
  manifest.set("image_dir", image_dir.string());
  for (const auto& skip : corpus.skipped)
    manifest.set("skipped." + skip.filename().string(), "undecodable");

  const SinogramShape shape = cfg.sinogram_shape();
  const bool gn = cfg.noise_mode == "gn";
  CompositeNoiseSource en_src(cfg.thermal, cfg.parasitic, cfg.seed);

  const SplitSpec splits[] = {{"train", 0, cfg.n_train},
                              {"val", cfg.n_train, cfg.n_val},
                              {"test", cfg.n_train + cfg.n_val, cfg.n_test}};
  for (const auto& split : splits) {
    fs::create_directories(out_dir / split.name / "oa");
    fs::create_directories(out_dir / split.name / "noise");
    fs::create_directories(out_dir / split.name / "noisy");
    for (std::size_t i = 0; i < split.count; ++i) {
      Sinogram oa = corpus.sinograms[split.begin + i];
      if (cfg.bandpass_enabled) {
        oa = bandpass(oa, cfg.bandpass);
        if (cfg.crop_after_filter) oa = crop_time(oa, cfg.crop_after_filter);
      }
      normalize_peak(oa, cfg.signal_peak_target);
      const std::string stem = zero_pad(i, 5);
      write_sinogram(oa, out_dir / split.name / "oa" / (stem + ".oasg"));
      manifest.set("source." + split.name + "." + stem,
                   corpus.sources[split.begin + i].filename().string() +
                       (corpus.flipped[split.begin + i] ? " flipped" : ""));

      auto emit_pair = [&](const Sinogram& noise, const std::string& tag) {
        Sinogram noisy = oa;
        for (std::size_t j = 0; j < noisy.size(); ++j)
          noisy.data[j] += noise.data[j];
        write_sinogram(noise, out_dir / split.name / "noise" / (tag + ".oasg"));
        write_sinogram(noisy, out_dir / split.name / "noisy" / (tag + ".oasg"));
      };

      if (!gn) {
        emit_pair(en_src.draw("ds/" + split.name, i, shape), stem);
      } else if (split.name == "train") {
        GaussianLevelNoiseSource src(cfg.gn_train_sigma_max, cfg.seed);
        emit_pair(src.draw("ds/train", i, shape), stem);
      } else if (split.name == "val") {
        // Equidistant sigmas in (0, max].
        const double sigma = cfg.gn_train_sigma_max *
                             static_cast<double>(i + 1) /
                             static_cast<double>(split.count);
        emit_pair(gen_thermal({sigma}, shape, cfg.seed, "ds/val/" + std::to_string(i)),
                  stem);
        manifest.set("sigma.val." + stem, sigma);
      } else {
        // Test grid: sigma in {0, step, ..., max}, every test sinogram at
        // every level.
        std::size_t level = 0;
        for (double sigma = 0.0; sigma <= cfg.gn_test_sigma_max + 1e-9;
             sigma += cfg.gn_test_sigma_step, ++level) {
          const std::string tag = "s" + zero_pad(level, 2) + "_" + stem;
          emit_pair(gen_thermal({sigma}, shape, cfg.seed,
                                "ds/test/" + std::to_string(level) + "/" +
                                    std::to_string(i)),
                    tag);
          manifest.set("sigma.test.s" + zero_pad(level, 2), sigma);
        }
      }
    }
    manifest.set("count." + split.name, static_cast<std::uint64_t>(split.count));
  }
  manifest.set("noise_mode", cfg.noise_mode);
  manifest.set("elapsed_s", elapsed_s(t0));
  save_config(cfg, out_dir / "config.used");
  manifest.save(out_dir / "dataset.manifest");
  note(progress, "dataset written to " + out_dir.string());
}

// ---------------------------------------------------------------------------
// train

namespace {

std::vector<Sinogram> load_dir_sinograms(const fs::path& dir) {
  std::vector<Sinogram> out;
  for (const auto& f : list_files(dir, ".oasg")) out.push_back(read_sinogram(f));
  return out;
}

}  // namespace

void cmd_train(const PipelineConfig& cfg, const fs::path& dataset_dir,
               const fs::path& out_dir, const ProgressFn& progress) {
  cfg.validate();
  const auto t0 = clock_type::now();
  const auto train_oa = load_dir_sinograms(dataset_dir / "train" / "oa");
  if (train_oa.empty())
    throw DataError("train: no training sinograms under " +
                    (dataset_dir / "train" / "oa").string());

  std::vector<DenoisePair> val_pairs;
  {
    const auto noisy = list_files(dataset_dir / "val" / "noisy", ".oasg");
    for (const auto& f : noisy) {
      DenoisePair p;
      p.noisy = read_sinogram(f);
      p.noise = read_sinogram(dataset_dir / "val" / "noise" / f.filename());
      val_pairs.push_back(std::move(p));
    }
  }

  TrainConfig tc = cfg.train;
  tc.config_hash = config_hash(cfg);
  std::unique_ptr<NoiseSource> src;
  if (cfg.noise_mode == "gn")
    src = std::make_unique<GaussianLevelNoiseSource>(cfg.gn_train_sigma_max, cfg.seed);
  else
    src = std::make_unique<CompositeNoiseSource>(cfg.thermal, cfg.parasitic, cfg.seed);

  std::vector<EpochLog> log;
  EpochCallback on_epoch;
  if (progress)
    on_epoch = [&progress](const EpochLog& e) {
      progress("epoch " + std::to_string(e.epoch) + ": train " +
               format_double(e.train_loss) + ", val " + format_double(e.val_loss) +
               ", lr " + format_double(e.lr));
    };
  DenoiserModel model = train_denoiser(cfg.arch, train_oa, *src, tc,
                                       std::move(val_pairs), &log, on_epoch);

  fs::create_directories(out_dir);
  save_model(model, out_dir / "model.oaml");
  {
    CsvWriter csv(out_dir / "train_log.csv", "epoch,train_loss,val_loss,lr");
    for (const auto& e : log)
      csv.row(std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
              format_double(e.val_loss) + "," + format_double(e.lr));
  }
  KeyValueFile manifest = base_manifest(cfg, "train");
  manifest.set("dataset", dataset_dir.string());
  manifest.set("n_train", static_cast<std::uint64_t>(train_oa.size()));
  manifest.set("best_epoch", static_cast<std::uint64_t>(model.best_epoch));
  manifest.set("best_val_loss", model.val_loss);
  manifest.set("model_hash", file_hash(out_dir / "model.oaml"));
  manifest.set("elapsed_s", elapsed_s(t0));
  manifest.save(out_dir / "manifest");
}

// ---------------------------------------------------------------------------
// denoise

DenoiseSummary cmd_denoise(const PipelineConfig& cfg, const fs::path& model_path,
                           const fs::path& input_dir, const fs::path& out_dir,
                           const ProgressFn& progress) {
  const auto t0 = clock_type::now();
  const DenoiserModel model = load_model(model_path);

  fs::path noisy_dir = input_dir;
  fs::path truth_dir;
  if (fs::is_directory(input_dir / "noisy")) {
    noisy_dir = input_dir / "noisy";
    if (fs::is_directory(input_dir / "noise")) truth_dir = input_dir / "noise";
  }
  const auto files = list_files(noisy_dir, ".oasg");
  if (files.empty())
    throw DataError("denoise: no .oasg inputs under " + noisy_dir.string());

  fs::create_directories(out_dir / "denoised");
  fs::create_directories(out_dir / "inferred_noise");

  DenoiseSummary summary;
  summary.has_ground_truth = !truth_dir.empty();
  summary.min_gain_db = std::numeric_limits<double>::infinity();
  const ChannelMask mask = config_mask(cfg);

  std::unique_ptr<CsvWriter> csv;
  if (summary.has_ground_truth)
    csv = std::make_unique<CsvWriter>(
        out_dir / "snr.csv", "scan,wavelength_nm,snr_before_db,snr_after_db,gain_db");

  double latency_total = 0.0;
  double gain_total = 0.0;
  for (const auto& f : files) {
    const Sinogram s = read_sinogram(f);
    const auto ti = clock_type::now();
    const Sinogram inferred = infer_noise(model, s);
    latency_total += elapsed_s(ti);
    Sinogram den = s;
    for (std::size_t i = 0; i < den.size(); ++i) den.data[i] -= inferred.data[i];
    write_sinogram(den, out_dir / "denoised" / f.filename());
    write_sinogram(inferred, out_dir / "inferred_noise" / f.filename());
    ++summary.count;

    if (summary.has_ground_truth) {
      const Sinogram truth = read_sinogram(truth_dir / f.filename());
      Sinogram zeros(s.n_transducers, s.n_samples, s.sample_rate_hz);
      const double before = snr_db(s, truth, zeros, mask);
      const double after = snr_db(s, truth, inferred, mask);
      const double gain = after - before;
      gain_total += gain;
      summary.min_gain_db = std::min(summary.min_gain_db, gain);
      csv->row(f.stem().string() + "," +
               (s.wavelength_nm ? format_double(*s.wavelength_nm) : "") + "," +
               format_double(before) + "," + format_double(after) + "," +
               format_double(gain));
    }
  }
  if (summary.has_ground_truth && summary.count)
    summary.mean_gain_db = gain_total / static_cast<double>(summary.count);
  if (!summary.has_ground_truth) summary.min_gain_db = 0.0;
  summary.mean_latency_s = latency_total / static_cast<double>(summary.count);

  KeyValueFile manifest = base_manifest(cfg, "denoise");
  manifest.set("model", model_path.string());
  manifest.set("model_hash", file_hash(model_path));
  manifest.set("input", input_dir.string());
  manifest.set("count", static_cast<std::uint64_t>(summary.count));
  manifest.set("mean_infer_latency_s", summary.mean_latency_s);
  if (summary.has_ground_truth) {
    manifest.set("mean_gain_db", summary.mean_gain_db);
    manifest.set("min_gain_db", summary.min_gain_db);
  }
  manifest.set("elapsed_s", elapsed_s(t0));
  manifest.save(out_dir / "manifest");
  note(progress, "denoised " + std::to_string(summary.count) + " sinograms");
  return summary;
}

// ---------------------------------------------------------------------------
// reconstruct

void cmd_reconstruct(const PipelineConfig& cfg, const fs::path& input_dir,
                     const fs::path& out_dir, const ProgressFn& progress) {
  cfg.validate();
  const auto t0 = clock_type::now();
  const auto files = list_files(input_dir, ".oasg");
  if (files.empty())
    throw DataError("reconstruct: no .oasg inputs under " + input_dir.string());
  const ForwardOperator op = cfg.make_operator();
  ForwardOperatorRef ref(op);

  fs::create_directories(out_dir);
  CsvWriter csv(out_dir / "recon.csv",
                "file,wavelength_nm,lambda_tikhonov,lambda_laplacian,iterations,"
                "objective,converged");
  KeyValueFile manifest = base_manifest(cfg, "reconstruct");
  manifest.set("input", input_dir.string());

  std::size_t idx = 0;
  for (const auto& f : files) {
    const Sinogram s = read_sinogram(f);
    ReconConfig rc;
    const double scale = lambda_scale(ref, s.data);
    rc.lambda_tikhonov = cfg.recon_lambda_rel_tikhonov * scale;
    rc.lambda_laplacian = cfg.recon_lambda_rel_laplacian * scale;
    rc.max_iters = cfg.recon_max_iters;
    rc.rel_tol = cfg.recon_rel_tol;
    const ReconResult res = reconstruct(s, op, rc);
    const std::string stem = f.stem().string();
    write_image(res.image, out_dir / (stem + ".oaim"));
    write_pgm16_preview(res.image, out_dir / (stem + ".pgm"));
    csv.row(stem + "," + (s.wavelength_nm ? format_double(*s.wavelength_nm) : "") +
            "," + format_double(res.lambda_tikhonov) + "," +
            format_double(res.lambda_laplacian) + "," +
            std::to_string(res.iterations) + "," +
            format_double(res.trace.back()) + "," +
            (res.converged ? "true" : "false"));
    manifest.set("image." + std::to_string(idx), stem + ".oaim");
    if (s.wavelength_nm)
      manifest.set("wavelength." + std::to_string(idx),
                   format_double(*s.wavelength_nm));
    ++idx;
    note(progress, "reconstructed " + stem);
  }
  manifest.set("count", static_cast<std::uint64_t>(idx));
  manifest.set("elapsed_s", elapsed_s(t0));
  manifest.save(out_dir / "manifest");
}

// ---------------------------------------------------------------------------
// unmix

void cmd_unmix(const PipelineConfig& cfg, const std::vector<fs::path>& recon_dirs,
               const fs::path& out_dir, const ProgressFn& progress) {
  cfg.validate();
  const auto t0 = clock_type::now();
  if (recon_dirs.empty()) throw DataError("unmix: no reconstruction directories");

  std::vector<ImageStack> scans;
  for (const auto& dir : recon_dirs) {
    const KeyValueFile m = KeyValueFile::load(dir / "manifest");
    const std::size_t count = m.get_u64("count");
    ImageStack stack;
    std::vector<std::pair<double, ImageGrid>> entries;
    for (std::size_t i = 0; i < count; ++i) {
      const std::string name = m.get("image." + std::to_string(i));
      double wl = m.has("wavelength." + std::to_string(i))
                      ? m.get_double("wavelength." + std::to_string(i))
                      : static_cast<double>(i);
      entries.emplace_back(wl, read_image(dir / name));
    }
    std::sort(entries.begin(), entries.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [wl, img] : entries) {
      stack.wavelengths_nm.push_back(wl);
      stack.images.push_back(std::move(img));
    }
    stack.validate("unmix input stack");
    scans.push_back(std::move(stack));
  }

  const SpectraMatrix spectra = assemble_spectra(scans);
  note(progress, "factorizing " + std::to_string(spectra.rows) + "x" +
                     std::to_string(spectra.cols) + " spectra matrix");
  const NmfResult nmf = nmf_factorize(spectra, cfg.nmf);

  fs::create_directories(out_dir);
  const auto& wl = scans[0].wavelengths_nm;
  {
    std::string header = "component";
    for (double l : wl) header += ",wl_" + format_double(l);
    CsvWriter csv(out_dir / "spectra.csv", header);
    for (std::size_t k = 0; k < nmf.k; ++k) {
      std::string row = std::to_string(k);
      for (std::size_t c = 0; c < spectra.cols; ++c)
        row += "," + format_double(nmf.h[k * spectra.cols + c]);
      csv.row(row);
    }
  }

  // Descriptive correlation against the bundled synthetic reference spectra.
  std::vector<std::string> best_name(nmf.k);
  {
    CsvWriter csv(out_dir / "correlations.csv",
                  "component,best_reference,pearson_r");
    for (std::size_t k = 0; k < nmf.k; ++k) {
      double best_r = -2.0;
      for (const auto& name : synthetic_chromophores()) {
        const auto ref = synthetic_spectrum(name, wl);
        double mh = 0.0, mr = 0.0;
        for (std::size_t c = 0; c < wl.size(); ++c) {
          mh += nmf.h[k * wl.size() + c];
          mr += ref[c];
        }
        mh /= static_cast<double>(wl.size());
        mr /= static_cast<double>(wl.size());
        double num = 0.0, dh = 0.0, dr = 0.0;
        for (std::size_t c = 0; c < wl.size(); ++c) {
          const double a = nmf.h[k * wl.size() + c] - mh;
          const double b = ref[c] - mr;
          num += a * b;
          dh += a * a;
          dr += b * b;
        }
        const double r = dh > 0.0 && dr > 0.0 ? num / std::sqrt(dh * dr) : 0.0;
        if (r > best_r) {
          best_r = r;
          best_name[k] = name;
        }
      }
      csv.row(std::to_string(k) + "," + best_name[k] + "," + format_double(best_r));
    }
  }

  for (std::size_t k = 0; k < nmf.k; ++k) {
    const ImageGrid map =
        coefficient_map(spectra, nmf, k, 0, scans[0].images[0].extent_m);
    write_image(map, out_dir / ("coeff_" + std::to_string(k) + ".oaim"));
    // Square-root display transform for previews only; stored data is raw.
    ImageGrid disp = map;
    for (double& v : disp.pixels) v = std::sqrt(std::max(0.0, v));
    write_pgm16_preview(disp, out_dir / ("coeff_" + std::to_string(k) + ".pgm"));
  }

  // Depth profiles over the hemoglobin-correlated components (fallback: all).
  std::vector<std::size_t> selected;
  for (std::size_t k = 0; k < nmf.k; ++k)
    if (best_name[k] == "hb" || best_name[k] == "hbo2") selected.push_back(k);
  if (selected.empty())
    for (std::size_t k = 0; k < nmf.k; ++k) selected.push_back(k);
  const auto depth = depth_map_from_grid(spectra.n_x, spectra.n_y,
                                         scans[0].images[0].extent_m,
                                         spectra.n_scans);
  const DepthProfiles profiles =
      depth_profiles(nmf, spectra, selected, depth, DepthProfileConfig{});
  {
    std::string header = "depth_m";
    for (std::size_t c : profiles.components) header += ",comp_" + std::to_string(c);
    CsvWriter csv(out_dir / "depth_profiles.csv", header);
    for (std::size_t b = 0; b < profiles.depth_m.size(); ++b) {
      if (!profiles.defined[b]) continue;  // undefined bins are omitted
      std::string row = format_double(profiles.depth_m[b]);
      for (std::size_t ci = 0; ci < profiles.components.size(); ++ci)
        row += "," + format_double(profiles.contributions[ci][b]);
      csv.row(row);
    }
  }

  KeyValueFile manifest = base_manifest(cfg, "unmix");
  for (std::size_t i = 0; i < recon_dirs.size(); ++i)
    manifest.set("scan." + std::to_string(i), recon_dirs[i].string());
  manifest.set("k", static_cast<std::uint64_t>(nmf.k));
  manifest.set("relative_error", nmf.relative_error);
  manifest.set("clamped_negatives", static_cast<std::uint64_t>(spectra.clamped));
  manifest.set("restart_index", static_cast<std::uint64_t>(nmf.restart_index));
  manifest.set("elapsed_s", elapsed_s(t0));
  manifest.save(out_dir / "manifest");
}

// ---------------------------------------------------------------------------
// metrics

void cmd_metrics(const PipelineConfig& cfg, const MetricsInputs& in,
                 const fs::path& out_dir, const ProgressFn& progress) {
  cfg.validate();
  const auto t0 = clock_type::now();
  fs::create_directories(out_dir);
  KeyValueFile manifest = base_manifest(cfg, "metrics");
  const ChannelMask mask = config_mask(cfg);

  const fs::path test_noisy = in.dataset_dir / "test" / "noisy";
  const fs::path test_noise = in.dataset_dir / "test" / "noise";
  const auto noisy_files = list_files(test_noisy, ".oasg");
  if (noisy_files.empty())
    throw DataError("metrics: no test sinograms under " + test_noisy.string());

  const bool gn = cfg.noise_mode == "gn";
  KeyValueFile ds_manifest = KeyValueFile::load(in.dataset_dir / "dataset.manifest");

  // Per-scan SNR before/after, plus per-sigma aggregation for gn datasets.
  std::vector<Sinogram> stack, denoised_stack;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_sigma;
  {
    CsvWriter csv(out_dir / "snr.csv",
                  "scan,sigma,snr_before_db,snr_after_db,gain_db");
    for (const auto& f : noisy_files) {
      const Sinogram s = read_sinogram(f);
      const Sinogram truth = read_sinogram(test_noise / f.filename());
      const fs::path den_path = in.denoised_dir / "denoised" / f.filename();
      const Sinogram den = read_sinogram(den_path);
      Sinogram inferred = s;
      for (std::size_t i = 0; i < inferred.size(); ++i)
        inferred.data[i] -= den.data[i];
      Sinogram zeros(s.n_transducers, s.n_samples, s.sample_rate_hz);
      const double before = snr_db(s, truth, zeros, mask);
      const double after = snr_db(s, truth, inferred, mask);
      std::string sigma;
      const std::string stem = f.stem().string();
      if (gn && stem.size() > 3 && stem[0] == 's') {
        const std::string key = "sigma.test." + stem.substr(0, 3);
        if (ds_manifest.has(key)) sigma = ds_manifest.get(key);
      }
      csv.row(stem + "," + sigma + "," + format_double(before) + "," +
              format_double(after) + "," + format_double(after - before));
      if (!sigma.empty()) {
        by_sigma[sigma].first.push_back(before);
        by_sigma[sigma].second.push_back(after);
      }
      stack.push_back(s);
      denoised_stack.push_back(den);
    }
  }

  if (gn && !by_sigma.empty()) {
    std::vector<std::pair<double, std::pair<double, double>>> rows;
    for (const auto& [sig, pair] : by_sigma) {
      double mb = 0.0, ma = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < pair.first.size(); ++i) {
        if (!std::isfinite(pair.first[i]) || !std::isfinite(pair.second[i]))
          continue;  // perfect-denoising sentinels excluded from means
        mb += pair.first[i];
        ma += pair.second[i];
        ++n;
      }
      if (n == 0) continue;
      rows.emplace_back(std::stod(sig),
                        std::make_pair(mb / static_cast<double>(n),
                                       ma / static_cast<double>(n)));
    }
    std::sort(rows.begin(), rows.end());
    CsvWriter csv(out_dir / "sigma_sweep.csv",
                  "sigma,snr_before_db,snr_after_db,gain_db");
    for (const auto& [sig, ba] : rows)
      csv.row(format_double(sig) + "," + format_double(ba.first) + "," +
              format_double(ba.second) + "," + format_double(ba.second - ba.first));
  }

  // Mean-amplitude SNR over the test stack (in-vivo style evaluation).
  {
    const std::size_t crop = std::min(cfg.metrics_crop_samples, stack[0].n_samples);
    const auto whole = snr_mean(stack, denoised_stack, cfg.metrics_window_samples,
                                crop, mask, SnrMeanMode::whole);
    std::vector<Sinogram> raw_as_denoised = stack;  // s'_noise = 0 baseline
    const auto whole_before =
        snr_mean(stack, raw_as_denoised, cfg.metrics_window_samples, crop, mask,
                 SnrMeanMode::whole);
    CsvWriter csv(out_dir / "snr_mean_whole.csv", "before_db,after_db");
    csv.row(format_double(whole_before.values[0]) + "," +
            format_double(whole.values[0]));

    auto write_curve = [&](SnrMeanMode mode, const fs::path& path,
                           const std::string& index_name) {
      const auto after = snr_mean(stack, denoised_stack, cfg.metrics_window_samples,
                                  crop, mask, mode);
      const auto before = snr_mean(stack, raw_as_denoised,
                                   cfg.metrics_window_samples, crop, mask, mode);
      CsvWriter c(path, index_name + ",before_db,after_db");
      for (std::size_t i = 0; i < after.values.size(); ++i)
        c.row(std::to_string(after.index[i]) + "," +
              format_double(before.values[i]) + "," +
              format_double(after.values[i]));
    };
    write_curve(SnrMeanMode::per_time_sample, out_dir / "snr_mean_time.csv", "t");
    write_curve(SnrMeanMode::per_transducer, out_dir / "snr_mean_transducer.csv",
                "transducer");
  }

  // Optional contrast resolution over reconstructed image pairs.
  if (!in.images_noisy_dir.empty() && fs::is_directory(in.images_noisy_dir)) {
    CsvWriter csv(out_dir / "cr.csv",
                  "image,wavelength_nm,cr_noisy,cr_denoised,gain");
    for (const auto& f : list_files(in.images_noisy_dir, ".oaim")) {
      const fs::path den = in.images_denoised_dir / f.filename();
      const fs::path vmask = in.masks_dir / (f.stem().string() + ".vessels.pgm");
      const fs::path bmask = in.masks_dir / (f.stem().string() + ".background.pgm");
      if (!fs::exists(den) || !fs::exists(vmask) || !fs::exists(bmask)) continue;
      const ImageGrid noisy_img = read_image(f);
      const ImageGrid den_img = read_image(den);
      auto load_mask = [&](const fs::path& p) {
        const ImageGrid m = read_pgm(p);
        RoiMask roi;
        roi.n_x = m.n_x;
        roi.n_y = m.n_y;
        roi.mask.resize(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) roi.mask[i] = m.pixels[i] > 0.5;
        return roi;
      };
      const RoiMask vessels = load_mask(vmask);
      const RoiMask background = load_mask(bmask);
      const double cr_noisy = contrast_resolution(noisy_img, vessels, background);
      const double cr_den = contrast_resolution(den_img, vessels, background);
      csv.row(f.stem().string() + ",," + format_double(cr_noisy) + "," +
              format_double(cr_den) + "," + format_double(cr_den - cr_noisy));
    }
  }

  manifest.set("count", static_cast<std::uint64_t>(stack.size()));
  manifest.set("elapsed_s", elapsed_s(t0));
  manifest.save(out_dir / "manifest");
  note(progress, "metrics written to " + out_dir.string());
}

// ---------------------------------------------------------------------------
// report

void render_curves_pgm(const std::vector<std::vector<double>>& series,
                       const fs::path& path, std::size_t width,
                       std::size_t height) {
  ImageGrid canvas(width, height, 1.0);
  double lo = 0.0, hi = 1.0;
  bool first = true;
  std::size_t max_len = 0;
  for (const auto& s : series)
    for (double v : s) {
      if (!std::isfinite(v)) continue;
      if (first) {
        lo = hi = v;
        first = false;
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  for (const auto& s : series) max_len = std::max(max_len, s.size());
  if (hi <= lo) hi = lo + 1.0;
  if (max_len < 2) max_len = 2;

  std::size_t tone = 0;
  for (const auto& s : series) {
    const double shade = 1.0 - 0.45 * static_cast<double>(tone % 2);
    double prev_x = 0.0, prev_y = 0.0;
    bool have_prev = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!std::isfinite(s[i])) {
        have_prev = false;
        continue;
      }
      const double x = static_cast<double>(i) /
                       static_cast<double>(max_len - 1) *
                       static_cast<double>(width - 1);
      const double y = (1.0 - (s[i] - lo) / (hi - lo)) *
                       static_cast<double>(height - 1);
      if (have_prev) {
        const double steps = std::max(std::abs(x - prev_x), std::abs(y - prev_y));
        const auto n = static_cast<std::size_t>(steps) + 1;
        for (std::size_t k = 0; k <= n; ++k) {
          const double t = static_cast<double>(k) / static_cast<double>(n);
          const auto px = static_cast<std::size_t>(prev_x + t * (x - prev_x));
          const auto py = static_cast<std::size_t>(prev_y + t * (y - prev_y));
          if (px < width && py < height) canvas.at(px, py) = shade;
        }
      }
      prev_x = x;
      prev_y = y;
      have_prev = true;
    }
    ++tone;
  }
  write_pgm8(canvas, path, 0.0, 1.0);
}

void cmd_report(const fs::path& results_dir, const fs::path& out_dir,
                const ProgressFn& progress) {
  fs::create_directories(out_dir);
  std::vector<std::string> missing;
  std::vector<std::string> verdicts;

  auto find_csv = [&](const std::string& name) -> fs::path {
    fs::path direct = results_dir / name;
    if (fs::exists(direct)) return direct;
    if (fs::is_directory(results_dir))
      for (const auto& e : fs::recursive_directory_iterator(results_dir))
        if (e.is_regular_file() && e.path().filename() == name) return e.path();
    return {};
  };

  // 1) SNR gain histogram (per-scan gains).
  double mean_gain = 0.0, min_gain = 0.0;
  bool have_snr = false;
  {
    const fs::path p = find_csv("snr.csv");
    if (p.empty()) {
      missing.push_back("snr.csv");
    } else {
      const auto rows = read_csv(p);
      std::vector<double> gains;
      for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].size() >= 5) {
          const double g = std::stod(rows[i].back());
          if (std::isfinite(g)) gains.push_back(g);
        }
      if (!gains.empty()) {
        have_snr = true;
        min_gain = gains[0];
        for (double g : gains) {
          mean_gain += g;
          min_gain = std::min(min_gain, g);
        }
        mean_gain /= static_cast<double>(gains.size());
        const double lo = std::floor(*std::min_element(gains.begin(), gains.end()));
        const double hi = std::ceil(*std::max_element(gains.begin(), gains.end()));
        const double bin = 0.5;
        const auto n_bins =
            static_cast<std::size_t>(std::max(1.0, (hi - lo) / bin));
        std::vector<std::size_t> counts(n_bins, 0);
        for (double g : gains) {
          auto b = static_cast<std::size_t>((g - lo) / bin);
          if (b >= n_bins) b = n_bins - 1;
          ++counts[b];
        }
        CsvWriter csv(out_dir / "snr_gain_hist.csv", "bin_lo_db,bin_hi_db,count");
        std::vector<double> curve;
        for (std::size_t b = 0; b < n_bins; ++b) {
          csv.row(format_double(lo + bin * static_cast<double>(b)) + "," +
                  format_double(lo + bin * static_cast<double>(b + 1)) + "," +
                  std::to_string(counts[b]));
          curve.push_back(static_cast<double>(counts[b]));
        }
        render_curves_pgm({curve}, out_dir / "snr_gain_hist.pgm");
      }
    }
  }

  // 2-3) SNR_mean curves.
  for (const char* name : {"snr_mean_time.csv", "snr_mean_transducer.csv"}) {
    const fs::path p = find_csv(name);
    if (p.empty()) {
      missing.push_back(name);
      continue;
    }
    const auto rows = read_csv(p);
    std::vector<double> before, after;
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].size() >= 3) {
        before.push_back(std::stod(rows[i][1]));
        after.push_back(std::stod(rows[i][2]));
      }
    fs::copy_file(p, out_dir / name, fs::copy_options::overwrite_existing);
    render_curves_pgm({before, after},
                      out_dir / (fs::path(name).stem().string() + ".pgm"));
  }

  // 4) Gaussian sigma sweep.
  bool sweep_ok = true;
  bool have_sweep = false;
  {
    const fs::path p = find_csv("sigma_sweep.csv");
    if (p.empty()) {
      missing.push_back("sigma_sweep.csv");
    } else {
      have_sweep = true;
      const auto rows = read_csv(p);
      std::vector<double> before, after;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() < 4) continue;
        const double sigma = std::stod(rows[i][0]);
        const double gain = std::stod(rows[i][3]);
        before.push_back(std::stod(rows[i][1]));
        after.push_back(std::stod(rows[i][2]));
        if (sigma > 0.0 && sigma <= 0.5 && !(gain > 0.0)) sweep_ok = false;
      }
      fs::copy_file(p, out_dir / "sigma_sweep.csv",
                    fs::copy_options::overwrite_existing);
      render_curves_pgm({before, after}, out_dir / "sigma_sweep.pgm");
    }
  }

  // 5) Contrast resolution table.
  double cr_mean_gain = 0.0, cr_positive_fraction = 0.0;
  bool have_cr = false;
  {
    const fs::path p = find_csv("cr.csv");
    if (p.empty()) {
      missing.push_back("cr.csv");
    } else {
      const auto rows = read_csv(p);
      std::map<std::string, std::pair<double, std::size_t>> by_wl;
      std::size_t n = 0, pos = 0;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() < 5) continue;
        const double gain = std::stod(rows[i][4]);
        cr_mean_gain += gain;
        ++n;
        if (gain > 0.0) ++pos;
        auto& cell = by_wl[rows[i][1]];
        cell.first += gain;
        ++cell.second;
      }
      if (n) {
        have_cr = true;
        cr_mean_gain /= static_cast<double>(n);
        cr_positive_fraction = static_cast<double>(pos) / static_cast<double>(n);
        CsvWriter csv(out_dir / "cr_per_wavelength.csv",
                      "wavelength_nm,mean_cr_gain,count");
        for (const auto& [wl, cell] : by_wl)
          csv.row((wl.empty() ? "all" : wl) + "," +
                  format_double(cell.first / static_cast<double>(cell.second)) +
                  "," + std::to_string(cell.second));
      }
    }
  }

  // 6) Depth contribution curves.
  {
    const fs::path p = find_csv("depth_profiles.csv");
    if (p.empty()) {
      missing.push_back("depth_profiles.csv");
    } else {
      const auto rows = read_csv(p);
      std::vector<std::vector<double>> series;
      if (!rows.empty() && rows[0].size() >= 2) {
        series.resize(rows[0].size() - 1);
        for (std::size_t i = 1; i < rows.size(); ++i)
          for (std::size_t c = 1; c < rows[i].size(); ++c)
            series[c - 1].push_back(std::stod(rows[i][c]));
      }
      fs::copy_file(p, out_dir / "depth_contributions.csv",
                    fs::copy_options::overwrite_existing);
      render_curves_pgm(series, out_dir / "depth_contributions.pgm");
    }
  }

  // 7) Summary with pass/fail against the desk-scale thresholds.
  auto verdict = [&](const std::string& name, bool available, bool pass,
                     const std::string& detail) {
    verdicts.push_back(name + ": " +
                       (available ? (pass ? "PASS" : "FAIL") : "SKIPPED") +
                       (detail.empty() ? "" : " (" + detail + ")"));
  };
  verdict("mean_snr_gain_ge_5db", have_snr, mean_gain >= 5.0,
          have_snr ? "mean " + format_double(mean_gain) + " dB" : "no snr.csv");
  verdict("min_snr_gain_ge_0db", have_snr, min_gain >= 0.0,
          have_snr ? "min " + format_double(min_gain) + " dB" : "no snr.csv");
  verdict("gaussian_sweep_gain_positive_le_0.5", have_sweep, sweep_ok,
          have_sweep ? "" : "no sigma_sweep.csv");
  verdict("cr_gain_positive_ge_90pct", have_cr, cr_positive_fraction >= 0.9,
          have_cr ? format_double(100.0 * cr_positive_fraction) + "%" : "no cr.csv");
  verdict("cr_mean_gain_gt_0.01", have_cr, cr_mean_gain > 0.01,
          have_cr ? "mean " + format_double(cr_mean_gain) : "no cr.csv");

  std::ofstream summary(out_dir / "summary.txt");
  summary << "report over " << results_dir.string() << "\n";
  for (const auto& v : verdicts) summary << v << "\n";
  if (!missing.empty()) {
    summary << "missing inputs:\n";
    for (const auto& m : missing) summary << "  " << m << "\n";
  }
  note(progress, "report written to " + out_dir.string());
}

// ---------------------------------------------------------------------------
// bench

BenchResult cmd_bench(const PipelineConfig& cfg,
                      const std::optional<fs::path>& model_path,
                      const fs::path& out_dir, const ProgressFn& progress) {
  BenchResult res;
  res.n_transducers = 256;
  res.n_samples = 1808;

  DenoiserModel model;
  if (model_path) {
    model = load_model(*model_path);
  } else {
    model = init_model(cfg.arch, cfg.seed, cfg.train.input_scale);
  }
  res.levels = model.arch.levels;
  res.base_channels = model.arch.base_channels;

  Sinogram s(res.n_transducers, res.n_samples, 40e6);
  Rng rng(cfg.seed, "bench/input");
  for (double& v : s.data) v = rng.gaussian();

  infer_noise(model, s);  // warm up
  for (int run = 0; run < 3; ++run) {
    const auto t0 = clock_type::now();
    infer_noise(model, s);
    res.runs_s.push_back(elapsed_s(t0));
    note(progress, "run " + std::to_string(run) + ": " +
                       format_double(res.runs_s.back()) + " s");
  }
  std::vector<double> sorted = res.runs_s;
  std::sort(sorted.begin(), sorted.end());
  res.median_infer_s = sorted[sorted.size() / 2];

  fs::create_directories(out_dir);
  KeyValueFile report;
  report.set("shape", std::to_string(res.n_transducers) + "x" +
                          std::to_string(res.n_samples));
  report.set("levels", static_cast<std::uint64_t>(res.levels));
  report.set("base_channels", static_cast<std::uint64_t>(res.base_channels));
  for (std::size_t i = 0; i < res.runs_s.size(); ++i)
    report.set("run_" + std::to_string(i) + "_s", res.runs_s[i]);
  report.set("median_infer_s", res.median_infer_s);
  report.save(out_dir / "bench.txt");
  return res;
}

}  // namespace oadn
