#include "magniflow/app/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "magniflow/errors.hpp"

namespace magniflow::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const KeySpec& spec_for(const std::string& key) {
  for (const auto& s : config_registry()) {
    if (s.name == key) return s;
  }
  throw ContractError("unknown config key '" + key + "'");
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const auto* end = s.data() + s.size();
  const auto r = std::from_chars(s.data(), end, out);
  return r.ec == std::errc() && r.ptr == end;
}

void check_value(const KeySpec& spec, const std::string& value) {
  bool ok = true;
  switch (spec.type) {
    case KeyType::kInt: {
      std::int64_t v;
      ok = parse_number(value, v);
      break;
    }
    case KeyType::kUInt: {
      std::uint64_t v;
      ok = parse_number(value, v);
      break;
    }
    case KeyType::kReal: {
      double v;
      ok = parse_number(value, v) && std::isfinite(v);
      break;
    }
    case KeyType::kBool:
      ok = value == "true" || value == "false" || value == "1" || value == "0";
      break;
    case KeyType::kString:
      break;
    case KeyType::kIntList: {
      std::stringstream ss(value);
      std::string item;
      int count = 0;
      while (std::getline(ss, item, ',')) {
        int v;
        ok = ok && parse_number(trim(item), v);
        ++count;
      }
      ok = ok && count > 0;
      break;
    }
  }
  if (!ok) throw ContractError("invalid value '" + value + "' for config key '" + spec.name + "'");
}

}  // namespace

const std::vector<KeySpec>& config_registry() {
  using K = KeyType;
  static const std::vector<KeySpec> registry = {
      {"seed", K::kUInt, "0", "master seed"},
      {"workers", K::kInt, "1", "worker threads for data generation and per-frame synthesis"},
      {"deterministic", K::kBool, "true", "fixed-order single-threaded accumulation"},
      // NOFA
      {"width", K::kInt, "32", "synthetic flow width"},
      {"height", K::kInt, "32", "synthetic flow height"},
      {"regions", K::kInt, "5", "motion regions per sample (n)"},
      {"segments", K::kInt, "36", "direction segments (d)"},
      {"magnitude_min", K::kReal, "0", "lower bound of region flow magnitude (px)"},
      {"magnitude_max", K::kReal, "0.3", "upper bound of region flow magnitude (px)"},
      {"alpha_min", K::kReal, "0", "lower bound of training magnification factor"},
      {"alpha_max", K::kReal, "100", "upper bound of magnification factor"},
      {"scale_min", K::kReal, "0.15", "region scale lower bound, fraction of the short side"},
      {"scale_max", K::kReal, "0.3", "region scale upper bound, fraction of the short side"},
      {"max_coverage", K::kReal, "0.5", "largest allowed mask-union fraction per sample"},
      {"noise_mu", K::kReal, "-4.303", "log-normal mu of noise flow magnitude"},
      {"noise_sigma", K::kReal, "0.527", "log-normal sigma of noise flow magnitude"},
      {"noise_blur", K::kReal, "3", "Gaussian sigma smoothing the noise flow"},
      {"real_count", K::kInt, "0", "estimator-derived samples appended by gen-data"},
      // diffusion magnifier
      {"T", K::kInt, "200", "diffusion steps"},
      {"sample_steps", K::kInt, "50", "DDIM sampling steps"},
      {"f_max", K::kReal, "32", "flow normalization (px)"},
      {"harmonics", K::kInt, "4", "HHME frequency count K"},
      {"dmm_widths", K::kIntList, "256,256,512", "latent U-Net widths"},
      {"embed_dim", K::kInt, "64", "conditioning embedding width"},
      {"time_features", K::kInt, "32", "sinusoidal timestep features"},
      {"head_gain", K::kReal, "0.1", "init gain of the flow and mask output convs"},
      // optimisation
      {"steps", K::kInt, "1000", "training steps"},
      {"batch", K::kInt, "4", "batch size"},
      {"lr", K::kReal, "0.0002", "AdamW learning rate"},
      {"beta1", K::kReal, "0.9", "AdamW beta1"},
      {"beta2", K::kReal, "0.999", "AdamW beta2"},
      {"eps", K::kReal, "1e-8", "AdamW epsilon"},
      {"weight_decay", K::kReal, "0.01", "AdamW decoupled weight decay"},
      {"lr_decay", K::kString, "none", "learning-rate schedule: none | cosine"},
      {"lr_floor", K::kReal, "0.05", "final learning rate as a fraction of lr (cosine)"},
      {"checkpoint_every", K::kInt, "0", "checkpoint period in steps (0: end only)"},
      {"loss_csv", K::kString, "", "loss curve path (default: next to the checkpoint)"},
      // synthesis network
      {"fvs_widths", K::kIntList, "16,32", "fusion U-Net widths"},
      {"fvs_encoder_width", K::kInt, "8", "feature encoder width"},
      {"r_min", K::kInt, "64", "minimum pyramid resolution"},
      {"fvs_flow_scale", K::kReal, "8", "flow normalization fed to the fusion net (px)"},
      {"fvs_blend_bias", K::kReal, "3", "initial blend logit"},
      {"lambda_l1", K::kReal, "1", "L1 loss weight"},
      {"lambda_g", K::kReal, "40", "style loss weight"},
      {"fvs_width", K::kInt, "128", "training pair width"},
      {"fvs_height", K::kInt, "128", "training pair height"},
      {"fvs_max_displacement", K::kReal, "3", "largest training translation (px)"},
      // flow estimator
      {"pyrlk_levels", K::kInt, "3", "pyramid levels"},
      {"pyrlk_window", K::kInt, "9", "window size (odd)"},
      {"pyrlk_iterations", K::kInt, "8", "refinements per level"},
      // magnification
      {"alpha", K::kReal, "10", "magnification factor; alpha = 1 reproduces the input motion"},
      {"mode", K::kString, "static", "static | dynamic"},
      {"flow_source", K::kString, "internal", "internal | flo_dir"},
      {"flo_dir", K::kString, "", "directory of flow_XXXXXX.flo conditional flows"},
      {"dmm_checkpoint", K::kString, "", "diffusion magnifier checkpoint"},
      {"fvs_checkpoint", K::kString, "", "synthesis network checkpoint"},
      {"noise_strength", K::kReal, "0.01", "photon-noise strength for fit-noise"},
  };
  return registry;
}

RunConfig::RunConfig() {
  for (const auto& s : config_registry()) values_[s.name] = s.default_value;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ContractError("config line " + std::to_string(number) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  check_value(spec_for(key), value);
  values_[key] = value;
}

void RunConfig::apply_environment() {
  if (const char* s = std::getenv("MAGNIFLOW_SEED"); s != nullptr && *s != '\0') set("seed", s);
}

const std::string& RunConfig::raw(const std::string& key) const {
  spec_for(key);
  return values_.at(key);
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  std::int64_t v = 0;
  parse_number(raw(key), v);
  return v;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  std::uint64_t v = 0;
  parse_number(raw(key), v);
  return v;
}

double RunConfig::get_real(const std::string& key) const {
  double v = 0;
  parse_number(raw(key), v);
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& v = raw(key);
  return v == "true" || v == "1";
}

std::string RunConfig::get_string(const std::string& key) const { return raw(key); }

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::stringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    int v = 0;
    parse_number(trim(item), v);
    out.push_back(v);
  }
  return out;
}

nofa::NofaConfig RunConfig::nofa() const {
  nofa::NofaConfig c;
  c.width = static_cast<int>(get_int("width"));
  c.height = static_cast<int>(get_int("height"));
  c.regions = static_cast<int>(get_int("regions"));
  c.segments = static_cast<int>(get_int("segments"));
  c.magnitude_min = get_real("magnitude_min");
  c.magnitude_max = get_real("magnitude_max");
  c.alpha_min = get_real("alpha_min");
  c.alpha_max = get_real("alpha_max");
  c.scale_min = get_real("scale_min");
  c.scale_max = get_real("scale_max");
  c.max_coverage = get_real("max_coverage");
  c.noise.mu = get_real("noise_mu");
  c.noise.sigma = get_real("noise_sigma");
  c.noise.blur_sigma = get_real("noise_blur");
  c.validate();
  return c;
}

dmm::DmmConfig RunConfig::dmm() const {
  dmm::DmmConfig c;
  const auto w = get_int_list("dmm_widths");
  require(w.size() == 3, "config key 'dmm_widths' needs exactly three widths");
  c.widths = {w[0], w[1], w[2]};
  c.harmonics = static_cast<int>(get_int("harmonics"));
  c.alpha_max = get_real("alpha_max");
  c.T = static_cast<int>(get_int("T"));
  c.f_max = get_real("f_max");
  c.embed_dim = static_cast<int>(get_int("embed_dim"));
  c.time_features = static_cast<int>(get_int("time_features"));
  c.sample_steps = static_cast<int>(get_int("sample_steps"));
  c.head_gain = get_real("head_gain");
  c.validate();
  return c;
}

fvs::FvsConfig RunConfig::fvs() const {
  fvs::FvsConfig c;
  const auto w = get_int_list("fvs_widths");
  require(w.size() == 2, "config key 'fvs_widths' needs exactly two widths");
  c.widths = {w[0], w[1]};
  c.encoder_width = static_cast<int>(get_int("fvs_encoder_width"));
  c.r_min = static_cast<int>(get_int("r_min"));
  c.flow_scale = get_real("fvs_flow_scale");
  c.blend_bias = get_real("fvs_blend_bias");
  c.validate();
  return c;
}

PyrLkOptions RunConfig::pyrlk() const {
  PyrLkOptions o;
  o.levels = static_cast<int>(get_int("pyrlk_levels"));
  o.window = static_cast<int>(get_int("pyrlk_window"));
  o.iterations = static_cast<int>(get_int("pyrlk_iterations"));
  require(o.levels >= 1, "config key 'pyrlk_levels' must be >= 1");
  require(o.window >= 3 && o.window % 2 == 1, "config key 'pyrlk_window' must be odd and >= 3");
  require(o.iterations >= 1, "config key 'pyrlk_iterations' must be >= 1");
  return o;
}

nn::AdamWOptions RunConfig::adam() const {
  nn::AdamWOptions o;
  o.lr = get_real("lr");
  o.beta1 = get_real("beta1");
  o.beta2 = get_real("beta2");
  o.eps = get_real("eps");
  o.weight_decay = get_real("weight_decay");
  require(o.lr > 0, "config key 'lr' must be positive");
  require(o.beta1 >= 0 && o.beta1 < 1, "config key 'beta1' must lie in [0, 1)");
  require(o.beta2 >= 0 && o.beta2 < 1, "config key 'beta2' must lie in [0, 1)");
  require(o.eps > 0, "config key 'eps' must be positive");
  require(o.weight_decay >= 0, "config key 'weight_decay' must be >= 0");
  return o;
}

std::string RunConfig::dump() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

}  // namespace magniflow::app
