#include "rvseg/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rvseg {

namespace {

const std::map<std::string, std::string>& default_map() {
  static const std::map<std::string, std::string> defaults = {
      {"variant", "plain"},
      {"generator", "fcnn"},
      {"learning_rate", "0.0002"},
      {"adam_beta1", "0.5"},
      {"adam_beta2", "0.999"},
      {"epochs", "1"},
      {"batch_stacks", "1"},
      {"seed", "0"},
      {"beta", "5e-06"},
      {"lambda", "0.005"},
      {"use_l1", "false"},
      {"use_gan", "auto"},
      {"literal_generator_gan_loss", "false"},
      {"input_h", "64"},
      {"input_w", "64"},
      {"roi_h", "64"},
      {"roi_w", "64"},
      {"roi_margin", "4"},
      {"gen_widths", "64,128,256,512,512,512"},
      {"disc_widths", "64,128,256,512,512"},
      {"noise", "dropout"},
      {"noise_dropout_p", "0.5"},
      {"noise_sigma", "0.1"},
      {"gru_kernel", "3"},
      {"disc_condition_on_image", "false"},
      {"roigan_gan_term_in_gen_steps", "true"},
      {"shared_gen_layers", "1,2,3"},
      {"shared_disc_layers", "1,2,3"},
      {"data_dir", "data"},
  };
  return defaults;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

double parse_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return d;
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || v.empty())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return i;
}

std::vector<std::int64_t> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<std::int64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_int(key, item));
  return out;
}

std::string fmt_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

std::string fmt_int_list(std::span<const std::int64_t> xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(xs[i]);
  }
  return out;
}

std::string fmt_int_set(const std::set<int>& xs) {
  std::string out;
  bool first = true;
  for (int x : xs) {
    if (!first) out.push_back(',');
    out += std::to_string(x);
    first = false;
  }
  return out;
}

}  // namespace

RunConfig::RunConfig() : values_(default_map()) {}

const std::map<std::string, std::string>& RunConfig::defaults() { return default_map(); }

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read config file " + path.string());
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_text(text);
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!default_map().count(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_) {  // std::map iterates sorted
    out += k;
    out.push_back('=');
    out += v;
    out.push_back('\n');
  }
  return out;
}

TrainConfig RunConfig::to_train_config() const {
  TrainConfig cfg;
  cfg.variant = variant_from_name(get("variant"));
  cfg.generator_kind = generator_kind_from_name(get("generator"));
  cfg.learning_rate = parse_double("learning_rate", get("learning_rate"));
  cfg.adam_beta1 = parse_double("adam_beta1", get("adam_beta1"));
  cfg.adam_beta2 = parse_double("adam_beta2", get("adam_beta2"));
  cfg.epochs = static_cast<int>(parse_int("epochs", get("epochs")));
  cfg.batch_stacks = static_cast<int>(parse_int("batch_stacks", get("batch_stacks")));
  cfg.seed = static_cast<std::uint64_t>(parse_int("seed", get("seed")));
  cfg.loss.beta = parse_double("beta", get("beta"));
  cfg.loss.lambda = parse_double("lambda", get("lambda"));
  cfg.loss.use_l1 = parse_bool("use_l1", get("use_l1"));
  const std::string& gan = get("use_gan");
  cfg.loss.use_gan = gan == "auto" ? cfg.variant != Variant::plain
                                   : parse_bool("use_gan", gan);
  cfg.loss.literal_generator_loss =
      parse_bool("literal_generator_gan_loss", get("literal_generator_gan_loss"));
  cfg.input_h = parse_int("input_h", get("input_h"));
  cfg.input_w = parse_int("input_w", get("input_w"));
  cfg.roi_h = parse_int("roi_h", get("roi_h"));
  cfg.roi_w = parse_int("roi_w", get("roi_w"));
  cfg.roi_margin = parse_int("roi_margin", get("roi_margin"));
  const auto gw = parse_int_list("gen_widths", get("gen_widths"));
  if (gw.size() != 6) throw ConfigError("gen_widths: expected 6 comma-separated values");
  std::copy(gw.begin(), gw.end(), cfg.gen_widths.begin());
  const auto dw = parse_int_list("disc_widths", get("disc_widths"));
  if (dw.size() != 5) throw ConfigError("disc_widths: expected 5 comma-separated values");
  std::copy(dw.begin(), dw.end(), cfg.disc_widths.begin());
  const std::string& noise = get("noise");
  if (noise == "dropout")
    cfg.noise_mode = NoiseMode::dropout;
  else if (noise == "gaussian")
    cfg.noise_mode = NoiseMode::gaussian;
  else
    throw ConfigError("noise: expected dropout or gaussian, got '" + noise + "'");
  cfg.noise_dropout_p = parse_double("noise_dropout_p", get("noise_dropout_p"));
  cfg.noise_sigma = parse_double("noise_sigma", get("noise_sigma"));
  cfg.gru_kernel = parse_int("gru_kernel", get("gru_kernel"));
  cfg.disc_condition_on_image =
      parse_bool("disc_condition_on_image", get("disc_condition_on_image"));
  cfg.roigan_gan_term_in_gen_steps =
      parse_bool("roigan_gan_term_in_gen_steps", get("roigan_gan_term_in_gen_steps"));
  cfg.shared_gen_layers.clear();
  for (auto i : parse_int_list("shared_gen_layers", get("shared_gen_layers")))
    cfg.shared_gen_layers.insert(static_cast<int>(i));
  cfg.shared_disc_layers.clear();
  for (auto i : parse_int_list("shared_disc_layers", get("shared_disc_layers")))
    cfg.shared_disc_layers.insert(static_cast<int>(i));
  cfg.validate();
  return cfg;
}

std::string to_config_text(const TrainConfig& cfg) {
  RunConfig rc;
  rc.set("variant", variant_name(cfg.variant));
  rc.set("generator", generator_kind_name(cfg.generator_kind));
  rc.set("learning_rate", fmt_double(cfg.learning_rate));
  rc.set("adam_beta1", fmt_double(cfg.adam_beta1));
  rc.set("adam_beta2", fmt_double(cfg.adam_beta2));
  rc.set("epochs", std::to_string(cfg.epochs));
  rc.set("batch_stacks", std::to_string(cfg.batch_stacks));
  rc.set("seed", std::to_string(cfg.seed));
  rc.set("beta", fmt_double(cfg.loss.beta));
  rc.set("lambda", fmt_double(cfg.loss.lambda));
  rc.set("use_l1", cfg.loss.use_l1 ? "true" : "false");
  rc.set("use_gan", cfg.loss.use_gan ? "true" : "false");
  rc.set("literal_generator_gan_loss", cfg.loss.literal_generator_loss ? "true" : "false");
  rc.set("input_h", std::to_string(cfg.input_h));
  rc.set("input_w", std::to_string(cfg.input_w));
  rc.set("roi_h", std::to_string(cfg.roi_h));
  rc.set("roi_w", std::to_string(cfg.roi_w));
  rc.set("roi_margin", std::to_string(cfg.roi_margin));
  rc.set("gen_widths", fmt_int_list(cfg.gen_widths));
  rc.set("disc_widths", fmt_int_list(cfg.disc_widths));
  rc.set("noise", cfg.noise_mode == NoiseMode::dropout ? "dropout" : "gaussian");
  rc.set("noise_dropout_p", fmt_double(cfg.noise_dropout_p));
  rc.set("noise_sigma", fmt_double(cfg.noise_sigma));
  rc.set("gru_kernel", std::to_string(cfg.gru_kernel));
  rc.set("disc_condition_on_image", cfg.disc_condition_on_image ? "true" : "false");
  rc.set("roigan_gan_term_in_gen_steps",
         cfg.roigan_gan_term_in_gen_steps ? "true" : "false");
  rc.set("shared_gen_layers", fmt_int_set(cfg.shared_gen_layers));
  rc.set("shared_disc_layers", fmt_int_set(cfg.shared_disc_layers));
  return rc.canonical_text();
}

}  // namespace rvseg
