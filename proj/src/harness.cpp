#include "metasac/harness.hpp"

#include "metasac/alpha.hpp"
#include "metasac/buffers.hpp"
#include "metasac/checkpoint.hpp"
#include "metasac/envs.hpp"
#include "metasac/metagrad.hpp"
#include "metasac/metrics.hpp"
#include "metasac/sac.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

namespace metasac {

namespace {

using Matrix = Eigen::MatrixXd;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

void check_finite(double v, const char* what, long step) {
  if (!std::isfinite(v)) {
    throw std::runtime_error(std::string("non-finite ") + what + " at step " + std::to_string(step));
  }
}

sac::OptimizerKind policy_optimizer_kind(const RunConfig& c) {
  if (c.policy_optimizer == "auto") {
    return c.algo == "meta-sac" ? sac::OptimizerKind::RmsProp : sac::OptimizerKind::Adam;
  }
  return sac::parse_optimizer(c.policy_optimizer);
}

// A critic with its Polyak target and optimizer.
struct CriticBundle {
  nn::CriticParams online;
  nn::CriticParams target;
  sac::OptimizerState opt;

  double update(const replay::Batch& batch, double alpha, const nn::PolicyParams& policy, const RunConfig& c,
                Rng& noise_rng) {
    const Matrix noise = standard_normal(batch.size(), policy.layout.action_dim, noise_rng);
    const Matrix y = sac::q_target(batch, alpha, policy, target, c.gamma, noise);
    const double loss = sac::update_critic(online, opt, batch, y, c.lr_q).loss;
    nn::polyak_update(target.values, online.values, c.tau);
    return loss;
  }
};

class Trainer {
 public:
  Trainer(const RunConfig& config, const TrainObserver& observer)
      : c_(config),
        obs_(observer),
        env_(env::make_env(config.env)),
        env_rng_(make_stream(config.seed, "env")),
        noise_rng_(make_stream(config.seed, "policy-noise")),
        replay_rng_(make_stream(config.seed, "replay")),
        eval_rng_(make_stream(config.seed, "eval")),
        metrics_rng_(make_stream(config.seed, "metrics")),
        tuner_(config.algo == "sac-v1" ? alpha::Tuner::Fixed
               : config.algo == "sac-v2" ? alpha::Tuner::Dual
                                         : alpha::Tuner::Meta),
        buffer_(env_->spec().state_dim, env_->spec().action_dim, config.capacity) {
    const env::EnvSpec& spec = env_->spec();
    Rng init_rng = make_stream(config.seed, "init");
    policy_ = nn::init_policy({spec.state_dim, spec.action_dim, c_.hidden, c_.hidden_layers, spec.action_bound},
                              init_rng);
    const nn::CriticLayout cl{spec.state_dim, spec.action_dim, c_.hidden, c_.hidden_layers, c_.twin_q};
    const auto critic_kind = sac::parse_optimizer(c_.critic_optimizer);
    nn::CriticParams q = nn::init_critic(cl, init_rng);
    critic_ = {q, q, sac::make_optimizer(critic_kind, c_.rho)};
    if (tuner_ == alpha::Tuner::Meta && c_.meta_q == "classic") {
      nn::CriticParams aux = nn::init_critic(cl, init_rng);
      classic_.emplace(CriticBundle{aux, aux, sac::make_optimizer(critic_kind, c_.rho)});
    }
    policy_opt_ = sac::make_optimizer(policy_optimizer_kind(c_), c_.rho);

    if (tuner_ == alpha::Tuner::Fixed) {
      schedule_ = c_.alpha_end > 0.0 ? alpha::FixedSchedule::decaying(c_.alpha, c_.alpha_end, std::max(1L, c_.steps))
                                     : alpha::FixedSchedule{c_.alpha, c_.alpha_decay};
      schedule_.validate();
    }
    alpha_ = alpha::make_alpha_state(c_.alpha, c_.lr_alpha, c_.alpha_adam);
    alpha_.grad_clip = c_.alpha_grad_clip;
    alpha_.target_entropy = c_.target_entropy_set ? c_.target_entropy : -static_cast<double>(spec.action_dim);

    if (tuner_ == alpha::Tuner::Meta && c_.meta_states == "initial") {
      Rng d0_rng = make_stream(config.seed, "d0");
      d0_.fill(*env_, c_.d0_size, d0_rng);
    }
  }

  TrainResult run() {
    TrainResult result;
    result.initial_log_alpha = log_alpha_at(0);
    const env::EnvSpec& spec = env_->spec();
    env::EnvState state = env_->reset(env_rng_);
    std::uniform_real_distribution<double> box(-spec.action_bound, spec.action_bound);

    evaluate(0, result.log);
    for (long t = 0; t < c_.steps; ++t) {
      const Vector o = env_->observe(state);
      Vector a(spec.action_dim);
      if (t < c_.start_steps && !c_.warmup_policy) {
        for (int d = 0; d < spec.action_dim; ++d) a(d) = box(noise_rng_);
      } else {
        a = nn::act_stochastic(policy_, o.transpose(), noise_rng_).row(0).transpose();
      }
      env::StepResult r = env_->step(state, a);
      // Horizon ends are truncations: the stored transition still bootstraps.
      buffer_.push({o, a, r.reward, env_->observe(r.next), false});
      state = r.done ? env_->reset(env_rng_) : std::move(r.next);

      if (t >= c_.start_steps && buffer_.size() >= c_.batch) {
        update_cycle(t);
        ++result.updates;
        if (obs_.on_update) obs_.on_update(t);
      }
      if ((t + 1) % c_.eval_interval == 0) evaluate(t + 1, result.log);
    }
    result.final_log_alpha = log_alpha_at(c_.steps);
    result.policy = policy_;
    return result;
  }

 private:
  using Vector = Eigen::VectorXd;

  double log_alpha_at(long t) const {
    return tuner_ == alpha::Tuner::Fixed ? std::log(schedule_.at(t)) : alpha_.log_alpha;
  }
  double alpha_at(long t) const { return tuner_ == alpha::Tuner::Fixed ? schedule_.at(t) : alpha_.alpha(); }

  void meta_step(long t, const replay::Batch& batch) {
    const Matrix noise = standard_normal(batch.size(), policy_.layout.action_dim, noise_rng_);
    Matrix arbitrary;
    if (c_.meta_states == "arbitrary") {
      arbitrary = buffer_.sample(c_.d0_size, replay_rng_).states;
    }
    const Matrix& s0 = c_.meta_states == "arbitrary" ? arbitrary : d0_.states();
    const nn::CriticParams& scorer = classic_ ? classic_->online : critic_.online;
    meta::MetaContext ctx{policy_, critic_.online, scorer, batch.states, noise, s0, policy_opt_, c_.lr_pi};
    const meta::MetaGradResult g = meta::meta_alpha_grad(ctx, alpha_.alpha());
    check_finite(g.grad, "metagradient", t);
    alpha::meta_update(alpha_, g.grad);
    if (obs_.on_alpha_update) obs_.on_alpha_update(t, alpha_.last_grad, alpha_.log_alpha);
  }

  void learn(long t, const replay::Batch& batch) {
    const double a = alpha_at(t);
    last_q_loss_ = critic_.update(batch, a, policy_, c_, noise_rng_);
    check_finite(last_q_loss_, "critic loss", t);
    if (classic_) check_finite(classic_->update(batch, 0.0, policy_, c_, noise_rng_), "classic critic loss", t);

    const Matrix noise = standard_normal(batch.size(), policy_.layout.action_dim, noise_rng_);
    sac::UpdateStats pi = sac::update_policy(policy_, policy_opt_, critic_.online, a, batch.states, noise, c_.lr_pi);
    last_pi_loss_ = pi.loss;
    check_finite(last_pi_loss_, "policy loss", t);
    if (tuner_ == alpha::Tuner::Dual) {
      alpha::dual_update(alpha_, pi.log_probs);
      if (obs_.on_alpha_update) obs_.on_alpha_update(t, alpha_.last_grad, alpha_.log_alpha);
    }
  }

  void update_cycle(long t) {
    const replay::Batch batch = buffer_.sample(c_.batch, replay_rng_);
    if (tuner_ != alpha::Tuner::Meta) {
      learn(t, batch);
      return;
    }
    if (c_.meta_order == "alpha-first") {
      meta_step(t, batch);
      learn(t, replay::resample_fresh(buffer_, batch, c_.resample, replay_rng_));
    } else {
      learn(t, batch);
      meta_step(t, replay::resample_fresh(buffer_, batch, c_.resample, replay_rng_));
    }
  }

  void evaluate(long step, RunLog& log) {
    sac::EvalResult e = sac::evaluate(policy_, *env_, c_.eval_rollouts, eval_rng_);
    LogRow row;
    row.step = step;
    row.eval_return_mean = e.mean;
    row.eval_return_std = e.std;
    row.log_alpha = log_alpha_at(step);
    row.q_loss = last_q_loss_;
    row.pi_loss = last_pi_loss_;
    row.traj_entropy_rate = metrics::trajectory_entropy_rate(
        e.visited, policy_, metrics::parse_entropy_mode(c_.entropy_mode), metrics_rng_);
    row.state_entropy = e.visited.rows() > c_.knn_k ? metrics::knn_entropy(e.visited, c_.knn_k) : kNaN;
    log.rows.push_back(row);
    if (obs_.on_eval) obs_.on_eval(row);
  }

  RunConfig c_;
  TrainObserver obs_;
  std::unique_ptr<env::Environment> env_;
  Rng env_rng_, noise_rng_, replay_rng_, eval_rng_, metrics_rng_;
  alpha::Tuner tuner_;
  replay::ReplayBuffer buffer_;
  replay::InitialStateBuffer d0_;
  nn::PolicyParams policy_;
  sac::OptimizerState policy_opt_;
  CriticBundle critic_;
  std::optional<CriticBundle> classic_;
  alpha::FixedSchedule schedule_;
  alpha::AlphaState alpha_;
  double last_q_loss_ = kNaN;
  double last_pi_loss_ = kNaN;
};

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

bool LogRow::operator==(const LogRow& o) const {
  return step == o.step && same(eval_return_mean, o.eval_return_mean) && same(eval_return_std, o.eval_return_std) &&
         same(log_alpha, o.log_alpha) && same(q_loss, o.q_loss) && same(pi_loss, o.pi_loss) &&
         same(traj_entropy_rate, o.traj_entropy_rate) && same(state_entropy, o.state_entropy);
}

TrainResult train(const RunConfig& config, const TrainObserver& observer) {
  config.validate();
  Trainer trainer(config, observer);
  TrainResult result = trainer.run();
  if (!config.out.empty()) write_csv(result.log, config.out);
  if (!config.svg.empty()) write_svg({{config.algo, result.log}}, config.svg);
  if (!config.save_policy.empty()) nn::save_policy(config.save_policy, result.policy);
  return result;
}

std::string format_csv(const RunLog& log) {
  std::string s = std::string(kCsvHeader) + "\n";
  for (const LogRow& r : log.rows) {
    s += std::to_string(r.step);
    for (double v : {r.eval_return_mean, r.eval_return_std, r.log_alpha, r.q_loss, r.pi_loss, r.traj_entropy_rate,
                     r.state_entropy}) {
      s += ',' + fmt(v);
    }
    s += '\n';
  }
  return s;
}

void write_csv(const RunLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << format_csv(log);
  if (!out) throw std::runtime_error("write failed for " + path);
}

RunLog parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("unexpected CSV header");
  RunLog log;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> v;
    std::istringstream fields(line);
    std::string f;
    while (std::getline(fields, f, ',')) {
      char* end = nullptr;
      v.push_back(std::strtod(f.c_str(), &end));
      if (f.empty() || *end != '\0') throw std::runtime_error("bad CSV field on line " + std::to_string(lineno));
    }
    if (v.size() != 8) throw std::runtime_error("expected 8 CSV fields on line " + std::to_string(lineno));
    log.rows.push_back({static_cast<long>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
  }
  return log;
}

RunLog read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

void write_svg(const std::vector<std::pair<std::string, RunLog>>& series, const std::string& path) {
  const double w = 640, h = 400, pad = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& [name, log] : series) {
    for (const LogRow& r : log.rows) {
      x0 = std::min(x0, static_cast<double>(r.step));
      x1 = std::max(x1, static_cast<double>(r.step));
      y0 = std::min(y0, r.eval_return_mean);
      y1 = std::max(y1, r.eval_return_mean);
    }
  }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << pad << "\" y=\"" << h - 10 << "\" font-size=\"12\">step " << fmt(x0) << " .. " << fmt(x1)
      << "</text>\n<text x=\"5\" y=\"20\" font-size=\"12\">return " << fmt(y0) << " .. " << fmt(y1) << "</text>\n";
  std::size_t k = 0;
  for (const auto& [name, log] : series) {
    const char* color = colors[k % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    for (const LogRow& r : log.rows) {
      const double x = pad + (r.step - x0) / (x1 - x0) * (w - 2 * pad);
      const double y = h - pad - (r.eval_return_mean - y0) / (y1 - y0) * (h - 2 * pad);
      out << x << ',' << y << ' ';
    }
    out << "\"/>\n<text x=\"" << w - 150 << "\" y=\"" << 20 + 15 * k << "\" fill=\"" << color
        << "\" font-size=\"12\">" << name << "</text>\n";
    ++k;
  }
  out << "</svg>\n";
}

}  // namespace metasac
