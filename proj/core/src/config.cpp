#include "oadn/config.hpp"

#include <cmath>
#include <sstream>

#include "oadn/errors.hpp"
#include "oadn/io.hpp"
#include "oadn/rng.hpp"

namespace oadn {

std::vector<double> PipelineConfig::wavelengths() const {
  std::vector<double> wl;
  for (double l = wavelength_start_nm; l <= wavelength_stop_nm + 1e-9;
       l += wavelength_step_nm)
    wl.push_back(l);
  return wl;
}

SinogramShape PipelineConfig::sinogram_shape() const {
  return {geometry.n_transducers, n_samples, geometry.sample_rate_hz};
}

ForwardOperator PipelineConfig::make_operator() const {
  return ForwardOperator(geometry, grid, n_samples, t_offset_samples,
                         arc_oversample);
}

void PipelineConfig::validate() const {
  geometry.validate("config geometry");
  arch.validate();
  train.validate();
  nmf.validate();
  thermal.validate();
  if (noise_mode != "en" && noise_mode != "gn")
    throw DataError("config: noise mode must be 'en' or 'gn'");
  if (noise_mode == "en") parasitic.validate(geometry.sample_rate_hz);
  const auto div = arch.divisor();
  if (geometry.n_transducers % div != 0 || n_samples % div != 0)
    throw DataError("config: sinogram shape " +
                    std::to_string(geometry.n_transducers) + "x" +
                    std::to_string(n_samples) + " not divisible by 2^levels = " +
                    std::to_string(div));
  if (!(signal_peak_target > 0.0))
    throw DataError("config: signal peak target must be positive");
  if (metrics_crop_samples > n_samples || metrics_window_samples > n_samples)
    throw DataError("config: metrics window/crop exceed n_samples");
  if (bandpass_enabled) bandpass.validate(geometry.sample_rate_hz);
}

PipelineConfig desk_config() {
  PipelineConfig cfg;
  cfg.geometry.n_transducers = 64;
  cfg.geometry.radius_m = 0.009;
  cfg.geometry.coverage_deg = 145.0;
  cfg.geometry.sample_rate_hz = 40e6;
  cfg.geometry.speed_of_sound_m_s = 1500.0;
  cfg.grid = {128, 128, 0.006};
  cfg.n_samples = 320;
  cfg.t_offset_samples = 40;
  cfg.arch.base_channels = 16;
  cfg.train.epochs = 50;
  cfg.train.decay_epochs = 10;
  cfg.train.input_scale = 0.4;  // peak 2.5 -> network range [-1, 1]
  cfg.nmf.k = 4;
  cfg.nmf.lambda_l1 = 1e-3;
  cfg.nmf.lambda_fro = 1e-3;
  return cfg;
}

PipelineConfig fullscale_config() {
  PipelineConfig cfg;
  cfg.geometry.n_transducers = 256;
  cfg.geometry.radius_m = 0.06;
  cfg.geometry.coverage_deg = 145.0;
  cfg.geometry.sample_rate_hz = 40e6;
  cfg.geometry.speed_of_sound_m_s = 1500.0;
  cfg.grid = {400, 400, 0.0399};
  cfg.n_samples = 1808;
  cfg.t_offset_samples = 0;
  cfg.bandpass_enabled = true;
  cfg.bandpass = BandpassSpec{};  // 500 kHz - 10 MHz, order 3, zero phase
  cfg.signal_peak_target = 250.0;
  cfg.arch.base_channels = 32;
  cfg.train.epochs = 300;
  cfg.train.decay_epochs = 50;
  cfg.train.input_scale = 0.004;
  cfg.n_train = 3000;
  cfg.n_val = 590;
  cfg.n_test = 629;
  cfg.nmf.k = 10;
  cfg.nmf.lambda_l1 = 50.1;
  cfg.nmf.lambda_fro = 50.1;
  cfg.wavelength_step_nm = 10.0;
  cfg.metrics_window_samples = 100;
  cfg.metrics_crop_samples = 1732;
  return cfg;
}

namespace {

KeyValueFile to_kv(const PipelineConfig& c) {
  KeyValueFile kv;
  kv.set("geometry.n_transducers", static_cast<std::uint64_t>(c.geometry.n_transducers));
  kv.set("geometry.radius_m", c.geometry.radius_m);
  kv.set("geometry.coverage_deg", c.geometry.coverage_deg);
  kv.set("geometry.sample_rate_hz", c.geometry.sample_rate_hz);
  kv.set("geometry.speed_of_sound_m_s", c.geometry.speed_of_sound_m_s);
  kv.set("geometry.center_x_m", c.geometry.center.x);
  kv.set("geometry.center_y_m", c.geometry.center.y);
  kv.set("grid.n_x", static_cast<std::uint64_t>(c.grid.n_x));
  kv.set("grid.n_y", static_cast<std::uint64_t>(c.grid.n_y));
  kv.set("grid.extent_m", c.grid.extent_m);
  kv.set("forward.n_samples", static_cast<std::uint64_t>(c.n_samples));
  kv.set("forward.t_offset_samples", std::to_string(c.t_offset_samples));
  kv.set("forward.arc_oversample", c.arc_oversample);
  kv.set("bandpass.enabled", c.bandpass_enabled ? "true" : "false");
  kv.set("bandpass.low_cut_hz", c.bandpass.low_cut_hz);
  kv.set("bandpass.high_cut_hz", c.bandpass.high_cut_hz);
  kv.set("bandpass.order", static_cast<std::uint64_t>(c.bandpass.order));
  kv.set("bandpass.zero_phase", c.bandpass.zero_phase ? "true" : "false");
  kv.set("bandpass.crop_after_filter", static_cast<std::uint64_t>(c.crop_after_filter));
  kv.set("signal.peak_target", c.signal_peak_target);
  kv.set("noise.mode", c.noise_mode);
  kv.set("thermal.sigma", c.thermal.sigma);
  kv.set("parasitic.bursts_mean", c.parasitic.bursts_mean);
  kv.set("parasitic.carrier_low_hz", c.parasitic.carrier_low_hz);
  kv.set("parasitic.carrier_high_hz", c.parasitic.carrier_high_hz);
  kv.set("parasitic.decay_low_s", c.parasitic.decay_low_s);
  kv.set("parasitic.decay_high_s", c.parasitic.decay_high_s);
  kv.set("parasitic.amp_low", c.parasitic.amp_low);
  kv.set("parasitic.amp_high", c.parasitic.amp_high);
  kv.set("parasitic.block_low", static_cast<std::uint64_t>(c.parasitic.block_low));
  kv.set("parasitic.block_high", static_cast<std::uint64_t>(c.parasitic.block_high));
  kv.set("parasitic.delay_low_samples",
         static_cast<std::uint64_t>(c.parasitic.delay_low_samples));
  kv.set("parasitic.delay_high_samples",
         static_cast<std::uint64_t>(c.parasitic.delay_high_samples));
  kv.set("gn.train_sigma_max", c.gn_train_sigma_max);
  kv.set("gn.test_sigma_step", c.gn_test_sigma_step);
  kv.set("gn.test_sigma_max", c.gn_test_sigma_max);
  kv.set("dataset.n_train", static_cast<std::uint64_t>(c.n_train));
  kv.set("dataset.n_val", static_cast<std::uint64_t>(c.n_val));
  kv.set("dataset.n_test", static_cast<std::uint64_t>(c.n_test));
  kv.set("dataset.augment", c.augment ? "true" : "false");
  kv.set("arch.levels", static_cast<std::uint64_t>(c.arch.levels));
  kv.set("arch.base_channels", static_cast<std::uint64_t>(c.arch.base_channels));
  kv.set("train.epochs", static_cast<std::uint64_t>(c.train.epochs));
  kv.set("train.batch_size", static_cast<std::uint64_t>(c.train.batch_size));
  kv.set("train.lr", c.train.lr);
  kv.set("train.beta1", c.train.beta1);
  kv.set("train.beta2", c.train.beta2);
  kv.set("train.adam_eps", c.train.adam_eps);
  kv.set("train.decay_epochs", static_cast<std::uint64_t>(c.train.decay_epochs));
  kv.set("train.input_scale", c.train.input_scale);
  kv.set("train.validation_fraction", c.train.validation_fraction);
  kv.set("recon.lambda_rel_tikhonov", c.recon_lambda_rel_tikhonov);
  kv.set("recon.lambda_rel_laplacian", c.recon_lambda_rel_laplacian);
  kv.set("recon.max_iters", static_cast<std::uint64_t>(c.recon_max_iters));
  kv.set("recon.rel_tol", c.recon_rel_tol);
  kv.set("nmf.k", static_cast<std::uint64_t>(c.nmf.k));
  kv.set("nmf.lambda_l1", c.nmf.lambda_l1);
  kv.set("nmf.lambda_fro", c.nmf.lambda_fro);
  kv.set("nmf.max_iters", static_cast<std::uint64_t>(c.nmf.max_iters));
  kv.set("nmf.rel_tol", c.nmf.rel_tol);
  kv.set("nmf.n_restarts", static_cast<std::uint64_t>(c.nmf.n_restarts));
  kv.set("stack.wavelength_start_nm", c.wavelength_start_nm);
  kv.set("stack.wavelength_stop_nm", c.wavelength_stop_nm);
  kv.set("stack.wavelength_step_nm", c.wavelength_step_nm);
  kv.set("metrics.window_samples",
         static_cast<std::uint64_t>(c.metrics_window_samples));
  kv.set("metrics.crop_samples", static_cast<std::uint64_t>(c.metrics_crop_samples));
  std::string excl;
  for (std::size_t i = 0; i < c.excluded_channels.size(); ++i) {
    if (i) excl += ",";
    excl += std::to_string(c.excluded_channels[i]);
  }
  kv.set("metrics.excluded_channels", excl);
  kv.set("seed.value", c.seed.value);
  return kv;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw DataError("config: bad boolean for " + key + ": " + v);
}

void from_kv(const KeyValueFile& kv, PipelineConfig& c) {
  auto u64 = [&](const char* k, std::size_t& dst) {
    if (kv.has(k)) dst = static_cast<std::size_t>(kv.get_u64(k));
  };
  auto i64 = [&](const char* k, auto& dst) {
    if (kv.has(k)) dst = std::stoll(kv.get(k));
  };
  auto f64 = [&](const char* k, double& dst) {
    if (kv.has(k)) dst = kv.get_double(k);
  };
  auto b = [&](const char* k, bool& dst) {
    if (kv.has(k)) dst = parse_bool(kv.get(k), k);
  };
  u64("geometry.n_transducers", c.geometry.n_transducers);
  f64("geometry.radius_m", c.geometry.radius_m);
  f64("geometry.coverage_deg", c.geometry.coverage_deg);
  f64("geometry.sample_rate_hz", c.geometry.sample_rate_hz);
  f64("geometry.speed_of_sound_m_s", c.geometry.speed_of_sound_m_s);
  f64("geometry.center_x_m", c.geometry.center.x);
  f64("geometry.center_y_m", c.geometry.center.y);
  u64("grid.n_x", c.grid.n_x);
  u64("grid.n_y", c.grid.n_y);
  f64("grid.extent_m", c.grid.extent_m);
  u64("forward.n_samples", c.n_samples);
  i64("forward.t_offset_samples", c.t_offset_samples);
  f64("forward.arc_oversample", c.arc_oversample);
  b("bandpass.enabled", c.bandpass_enabled);
  f64("bandpass.low_cut_hz", c.bandpass.low_cut_hz);
  f64("bandpass.high_cut_hz", c.bandpass.high_cut_hz);
  if (kv.has("bandpass.order"))
    c.bandpass.order = static_cast<int>(kv.get_u64("bandpass.order"));
  b("bandpass.zero_phase", c.bandpass.zero_phase);
  u64("bandpass.crop_after_filter", c.crop_after_filter);
  f64("signal.peak_target", c.signal_peak_target);
  if (kv.has("noise.mode")) c.noise_mode = kv.get("noise.mode");
  f64("thermal.sigma", c.thermal.sigma);
  f64("parasitic.bursts_mean", c.parasitic.bursts_mean);
  f64("parasitic.carrier_low_hz", c.parasitic.carrier_low_hz);
  f64("parasitic.carrier_high_hz", c.parasitic.carrier_high_hz);
  f64("parasitic.decay_low_s", c.parasitic.decay_low_s);
  f64("parasitic.decay_high_s", c.parasitic.decay_high_s);
  f64("parasitic.amp_low", c.parasitic.amp_low);
  f64("parasitic.amp_high", c.parasitic.amp_high);
  u64("parasitic.block_low", c.parasitic.block_low);
  u64("parasitic.block_high", c.parasitic.block_high);
  u64("parasitic.delay_low_samples", c.parasitic.delay_low_samples);
  u64("parasitic.delay_high_samples", c.parasitic.delay_high_samples);
  f64("gn.train_sigma_max", c.gn_train_sigma_max);
  f64("gn.test_sigma_step", c.gn_test_sigma_step);
  f64("gn.test_sigma_max", c.gn_test_sigma_max);
  u64("dataset.n_train", c.n_train);
  u64("dataset.n_val", c.n_val);
  u64("dataset.n_test", c.n_test);
  b("dataset.augment", c.augment);
  if (kv.has("arch.levels")) c.arch.levels = static_cast<int>(kv.get_u64("arch.levels"));
  if (kv.has("arch.base_channels"))
    c.arch.base_channels = static_cast<int>(kv.get_u64("arch.base_channels"));
  if (kv.has("train.epochs")) c.train.epochs = static_cast<int>(kv.get_u64("train.epochs"));
  if (kv.has("train.batch_size"))
    c.train.batch_size = static_cast<int>(kv.get_u64("train.batch_size"));
  f64("train.lr", c.train.lr);
  f64("train.beta1", c.train.beta1);
  f64("train.beta2", c.train.beta2);
  f64("train.adam_eps", c.train.adam_eps);
  if (kv.has("train.decay_epochs"))
    c.train.decay_epochs = static_cast<int>(kv.get_u64("train.decay_epochs"));
  f64("train.input_scale", c.train.input_scale);
  f64("train.validation_fraction", c.train.validation_fraction);
  f64("recon.lambda_rel_tikhonov", c.recon_lambda_rel_tikhonov);
  f64("recon.lambda_rel_laplacian", c.recon_lambda_rel_laplacian);
  u64("recon.max_iters", c.recon_max_iters);
  f64("recon.rel_tol", c.recon_rel_tol);
  u64("nmf.k", c.nmf.k);
  f64("nmf.lambda_l1", c.nmf.lambda_l1);
  f64("nmf.lambda_fro", c.nmf.lambda_fro);
  u64("nmf.max_iters", c.nmf.max_iters);
  f64("nmf.rel_tol", c.nmf.rel_tol);
  u64("nmf.n_restarts", c.nmf.n_restarts);
  f64("stack.wavelength_start_nm", c.wavelength_start_nm);
  f64("stack.wavelength_stop_nm", c.wavelength_stop_nm);
  f64("stack.wavelength_step_nm", c.wavelength_step_nm);
  u64("metrics.window_samples", c.metrics_window_samples);
  u64("metrics.crop_samples", c.metrics_crop_samples);
  if (kv.has("metrics.excluded_channels")) {
    c.excluded_channels.clear();
    std::istringstream ss(kv.get("metrics.excluded_channels"));
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) c.excluded_channels.push_back(std::stoul(tok));
  }
  if (kv.has("seed.value")) c.seed.value = kv.get_u64("seed.value");
}

}  // namespace

std::string serialize_config(const PipelineConfig& cfg) {
  return to_kv(cfg).serialize();
}

PipelineConfig parse_config(const std::string& text) {
  PipelineConfig cfg = desk_config();
  from_kv(KeyValueFile::parse(text), cfg);
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig cfg = desk_config();
  from_kv(KeyValueFile::load(path), cfg);
  cfg.validate();
  return cfg;
}

void save_config(const PipelineConfig& cfg, const std::filesystem::path& path) {
  KeyValueFile kv = to_kv(cfg);
  kv.save(path);
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw DataError("override must look like section.key=value: " + assignment);
  KeyValueFile kv;
  kv.set(assignment.substr(0, eq), assignment.substr(eq + 1));
  from_kv(kv, cfg);
  cfg.validate();
}

std::uint64_t config_hash(const PipelineConfig& cfg) {
  return Rng::fnv1a64(serialize_config(cfg));
}

}  // namespace oadn
