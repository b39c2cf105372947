#include "metasac/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace metasac {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(x)) {
    throw ConfigError("setting '" + key + "': '" + v + "' is not a finite number");
  }
  return x;
}

long to_long(const std::string& key, const std::string& v) {
  // Accept "3e4" style values as long as they are integral.
  const double x = to_double(key, v);
  if (x != std::floor(x) || std::fabs(x) > 9e15) {
    throw ConfigError("setting '" + key + "': '" + v + "' is not an integer");
  }
  return static_cast<long>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("setting '" + key + "': '" + v + "' is not on/off");
}

std::string one_of(const std::string& key, const std::string& v, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return v;
  std::string msg = "setting '" + key + "': '" + v + "' is not one of";
  for (const char* a : allowed) msg += std::string(" ") + a;
  throw ConfigError(msg);
}

// Shortest text that parses back to the same double.
std::string fmt(double x) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

}  // namespace

void RunConfig::apply_setting(const std::string& raw_key, const std::string& raw_value) {
  std::string key = trim(raw_key);
  std::replace(key.begin(), key.end(), '-', '_');
  const std::string v = trim(raw_value);

  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"env", [](RunConfig& c, auto& k, auto& x) { c.env = one_of(k, x, {"pointmass", "pendulum"}); }},
      {"algo", [](RunConfig& c, auto& k, auto& x) { c.algo = one_of(k, x, {"sac-v1", "sac-v2", "meta-sac"}); }},
      {"seed", [](RunConfig& c, auto& k, auto& x) {
         const long s = to_long(k, x);
         if (s < 0) throw ConfigError("seed must be non-negative");
         c.seed = static_cast<std::uint64_t>(s);
       }},
      {"steps", [](RunConfig& c, auto& k, auto& x) { c.steps = to_long(k, x); }},
      {"start_steps", [](RunConfig& c, auto& k, auto& x) { c.start_steps = to_long(k, x); }},
      {"eval_interval", [](RunConfig& c, auto& k, auto& x) { c.eval_interval = to_long(k, x); }},
      {"eval_rollouts", [](RunConfig& c, auto& k, auto& x) { c.eval_rollouts = static_cast<int>(to_long(k, x)); }},
      {"hidden", [](RunConfig& c, auto& k, auto& x) { c.hidden = static_cast<int>(to_long(k, x)); }},
      {"hidden_layers", [](RunConfig& c, auto& k, auto& x) { c.hidden_layers = static_cast<int>(to_long(k, x)); }},
      {"twin_q", [](RunConfig& c, auto& k, auto& x) { c.twin_q = to_bool(k, x); }},
      {"batch", [](RunConfig& c, auto& k, auto& x) { c.batch = static_cast<int>(to_long(k, x)); }},
      {"gamma", [](RunConfig& c, auto& k, auto& x) { c.gamma = to_double(k, x); }},
      {"tau", [](RunConfig& c, auto& k, auto& x) { c.tau = to_double(k, x); }},
      {"lr_q", [](RunConfig& c, auto& k, auto& x) { c.lr_q = to_double(k, x); }},
      {"lr_pi", [](RunConfig& c, auto& k, auto& x) { c.lr_pi = to_double(k, x); }},
      {"lr_alpha", [](RunConfig& c, auto& k, auto& x) { c.lr_alpha = to_double(k, x); }},
      {"policy_optimizer", [](RunConfig& c, auto& k, auto& x) {
         c.policy_optimizer = one_of(k, x, {"auto", "sgd", "rmsprop", "adam"});
       }},
      {"critic_optimizer", [](RunConfig& c, auto& k, auto& x) {
         c.critic_optimizer = one_of(k, x, {"sgd", "rmsprop", "adam"});
       }},
      {"rho", [](RunConfig& c, auto& k, auto& x) { c.rho = to_double(k, x); }},
      {"capacity", [](RunConfig& c, auto& k, auto& x) { c.capacity = to_long(k, x); }},
      {"alpha", [](RunConfig& c, auto& k, auto& x) { c.alpha = to_double(k, x); }},
      {"alpha_decay", [](RunConfig& c, auto& k, auto& x) { c.alpha_decay = to_double(k, x); }},
      {"alpha_end", [](RunConfig& c, auto& k, auto& x) { c.alpha_end = to_double(k, x); }},
      {"alpha_adam", [](RunConfig& c, auto& k, auto& x) { c.alpha_adam = to_bool(k, x); }},
      {"alpha_grad_clip", [](RunConfig& c, auto& k, auto& x) { c.alpha_grad_clip = to_double(k, x); }},
      {"target_entropy", [](RunConfig& c, auto& k, auto& x) {
         if (x == "auto") {
           c.target_entropy_set = false;
           return;
         }
         c.target_entropy = to_double(k, x);
         c.target_entropy_set = true;
       }},
      {"meta_states", [](RunConfig& c, auto& k, auto& x) { c.meta_states = one_of(k, x, {"initial", "arbitrary"}); }},
      {"meta_q", [](RunConfig& c, auto& k, auto& x) { c.meta_q = one_of(k, x, {"soft", "classic"}); }},
      {"resample", [](RunConfig& c, auto& k, auto& x) { c.resample = to_bool(k, x); }},
      {"meta_order", [](RunConfig& c, auto& k, auto& x) { c.meta_order = one_of(k, x, {"alpha-first", "alg1"}); }},
      {"d0_size", [](RunConfig& c, auto& k, auto& x) { c.d0_size = to_long(k, x); }},
      {"warmup_policy", [](RunConfig& c, auto& k, auto& x) { c.warmup_policy = to_bool(k, x); }},
      {"entropy_mode", [](RunConfig& c, auto& k, auto& x) { c.entropy_mode = one_of(k, x, {"gaussian", "mc"}); }},
      {"knn_k", [](RunConfig& c, auto& k, auto& x) { c.knn_k = static_cast<int>(to_long(k, x)); }},
      {"out", [](RunConfig& c, auto&, auto& x) { c.out = x; }},
      {"svg", [](RunConfig& c, auto&, auto& x) { c.svg = x; }},
      {"save_policy", [](RunConfig& c, auto&, auto& x) { c.save_policy = x; }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown setting '" + raw_key + "'");
  it->second(*this, key, v);
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      apply_setting(line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_text(ss.str(), path);
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(steps >= 0, "steps must be non-negative");
  require(start_steps >= 0 && steps >= start_steps, "steps must be at least start_steps");
  require(eval_interval >= 1, "eval_interval must be at least 1");
  require(eval_rollouts >= 1, "eval_rollouts must be at least 1");
  require(hidden >= 1 && hidden_layers >= 1, "network sizes must be positive");
  require(batch >= 1, "batch must be at least 1");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  require(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
  require(lr_q > 0.0 && lr_pi > 0.0 && lr_alpha > 0.0, "learning rates must be positive");
  require(rho >= 0.0 && rho < 1.0, "rho must lie in [0, 1)");
  require(capacity >= batch, "capacity must hold at least one batch");
  require(alpha > 0.0, "alpha must be positive");
  require(alpha_decay >= 0.0, "alpha_decay must be non-negative");
  require(alpha_end >= 0.0, "alpha_end must be non-negative");
  require(!(alpha_end > 0.0 && alpha_decay > 0.0), "set either alpha_decay or alpha_end, not both");
  require(alpha_grad_clip >= 0.0, "alpha_grad_clip must be non-negative");
  require(d0_size >= 1, "d0_size must be at least 1");
  require(knn_k >= 1, "knn_k must be at least 1");
  // Re-checked here for configs assembled in code rather than parsed.
  one_of("env", env, {"pointmass", "pendulum"});
  one_of("algo", algo, {"sac-v1", "sac-v2", "meta-sac"});
  one_of("policy_optimizer", policy_optimizer, {"auto", "sgd", "rmsprop", "adam"});
  one_of("critic_optimizer", critic_optimizer, {"sgd", "rmsprop", "adam"});
  one_of("meta_states", meta_states, {"initial", "arbitrary"});
  one_of("meta_q", meta_q, {"soft", "classic"});
  one_of("meta_order", meta_order, {"alpha-first", "alg1"});
  one_of("entropy_mode", entropy_mode, {"gaussian", "mc"});
  require(!(algo == "meta-sac" && policy_optimizer == "adam"),
          "meta-sac needs an rmsprop or sgd policy optimizer");
}

std::string RunConfig::to_text() const {
  std::ostringstream o;
  auto b = [](bool x) { return x ? "on" : "off"; };
  o << "env = " << env << "\nalgo = " << algo << "\nseed = " << seed << "\nsteps = " << steps
    << "\nstart_steps = " << start_steps << "\neval_interval = " << eval_interval
    << "\neval_rollouts = " << eval_rollouts << "\nhidden = " << hidden << "\nhidden_layers = " << hidden_layers
    << "\ntwin_q = " << b(twin_q) << "\nbatch = " << batch << "\ngamma = " << fmt(gamma) << "\ntau = " << fmt(tau)
    << "\nlr_q = " << fmt(lr_q) << "\nlr_pi = " << fmt(lr_pi) << "\nlr_alpha = " << fmt(lr_alpha)
    << "\npolicy_optimizer = " << policy_optimizer << "\ncritic_optimizer = " << critic_optimizer
    << "\nrho = " << fmt(rho) << "\ncapacity = " << capacity << "\nalpha = " << fmt(alpha)
    << "\nalpha_decay = " << fmt(alpha_decay) << "\nalpha_end = " << fmt(alpha_end)
    << "\nalpha_adam = " << b(alpha_adam) << "\nalpha_grad_clip = " << fmt(alpha_grad_clip)
    << "\ntarget_entropy = " << (target_entropy_set ? fmt(target_entropy) : std::string("auto"))
    << "\nmeta_states = " << meta_states << "\nmeta_q = " << meta_q << "\nresample = " << b(resample)
    << "\nmeta_order = " << meta_order << "\nd0_size = " << d0_size << "\nwarmup_policy = " << b(warmup_policy)
    << "\nentropy_mode = " << entropy_mode << "\nknn_k = " << knn_k << "\n";
  if (!out.empty()) o << "out = " << out << "\n";
  if (!svg.empty()) o << "svg = " << svg << "\n";
  if (!save_policy.empty()) o << "save_policy = " << save_policy << "\n";
  return o.str();
}

}  // namespace metasac
