#include <cmath>
#include <fstream>

#include "lingua/autodiff/checkpoint.hpp"
#include "lingua/train/trainer.hpp"
#include "lingua/util/config_file.hpp"

namespace lingua::train {

double noam_lr(std::size_t step, const Schedule& s) {
  if (step == 0) throw std::invalid_argument("noam schedule is defined for step >= 1");
  if (!(s.d_model > 0 && s.warmup > 0 && s.factor > 0)) throw std::invalid_argument("noam schedule needs positive parameters");
  const double t = static_cast<double>(step);
  return s.factor * std::pow(s.d_model, -0.5) * std::min(std::pow(t, -0.5), t * std::pow(s.warmup, -1.5));
}

std::size_t TrainState::total_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

std::size_t TrainState::trainable_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) {
    if (!frozen.count(name)) n += t.size();
  }
  return n;
}

TrainState make_state(const model::ModelConfig& cfg, std::uint64_t seed) {
  TrainState s;
  s.config = cfg;
  s.seed = seed;
  s.params = model::init_parameters(cfg, seed);
  for (const auto& [name, t] : s.params) s.moments[name] = {std::vector<double>(t.size()), std::vector<double>(t.size())};
  return s;
}

void adam_step(TrainState& state, double lr, const AdamConfig& adam) {
  // Validate everything first so a bad gradient leaves the state untouched.
  for (auto& [name, t] : state.params) {
    if (state.frozen.count(name) || !t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  for (auto& [name, p] : state.params) {
    if (state.frozen.count(name)) continue;
    auto& mom = state.moments[name];
    if (mom.m.size() != p.size()) mom = {std::vector<double>(p.size()), std::vector<double>(p.size())};
    auto values = p.mutable_values();
    const bool has = p.has_grad();
    auto grad = has ? p.grad() : std::span<const double>{};
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has ? grad[i] : 0.0;
      mom.m[i] = adam.beta1 * mom.m[i] + (1.0 - adam.beta1) * g;
      mom.v[i] = adam.beta2 * mom.v[i] + (1.0 - adam.beta2) * g * g;
      const double mhat = mom.m[i] / c1, vhat = mom.v[i] / c2;
      values[i] -= lr * mhat / (std::sqrt(vhat) + adam.eps);
    }
    if (has) p.zero_grad();
  }
}

double clip_global_norm(std::vector<std::vector<double>*> grads, double max_norm) {
  double sq = 0.0;
  for (const auto* g : grads) {
    for (double x : *g) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto* g : grads) {
      for (auto& x : *g) x *= f;
    }
  }
  return norm;
}

double clip_global_norm(TrainState& state, double max_norm) {
  std::vector<std::vector<double>*> grads;
  for (auto& [name, p] : state.params) {
    if (!state.frozen.count(name) && p.has_grad()) grads.push_back(&p.node()->grad);
  }
  return clip_global_norm(grads, max_norm);
}

void save_checkpoint(const TrainState& state, const bpe::Vocabulary& vocab, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<ad::NamedArray> params, moments;
  for (const auto& [name, t] : state.params) {
    params.push_back({name, t.shape(), {t.values().begin(), t.values().end()}});
    auto it = state.moments.find(name);
    if (!state.frozen.count(name) && it != state.moments.end()) {
      moments.push_back({"m/" + name, t.shape(), it->second.m});
      moments.push_back({"v/" + name, t.shape(), it->second.v});
    }
  }
  ad::write_tensor_file(dir / "params.lct", params);
  ad::write_tensor_file(dir / "optimizer.lct", moments);
  util::ConfigFile cfg;
  state.config.write(cfg);
  cfg.set("state.step", std::to_string(state.step));
  cfg.set("state.seed", std::to_string(state.seed));
  cfg.set("state.total_params", std::to_string(state.total_count()));
  cfg.set("state.trainable_params", std::to_string(state.trainable_count()));
  cfg.save(dir / "config.cfg");
  std::ofstream freeze(dir / "freeze.txt", std::ios::trunc);
  for (const auto& name : state.frozen) freeze << name << '\n';
  vocab.save(dir / "vocab.bpe");
  if (!freeze) throw TrainingError("cannot write checkpoint to " + dir.string());
}

TrainState load_checkpoint(const std::filesystem::path& dir, bpe::Vocabulary* vocab) {
  if (!std::filesystem::is_directory(dir)) throw TrainingError("checkpoint directory " + dir.string() + " not found");
  const auto cfg = util::ConfigFile::load(dir / "config.cfg");
  TrainState s;
  s.config = model::ModelConfig::read(cfg);
  s.step = static_cast<std::size_t>(cfg.get_int("state.step"));
  s.seed = static_cast<std::uint64_t>(cfg.get_int("state.seed"));
  const auto shapes = model::parameter_shapes(s.config);
  for (auto& rec : ad::read_tensor_file(dir / "params.lct")) {
    auto it = shapes.find(rec.name);
    if (it == shapes.end() || it->second != rec.shape) {
      throw TrainingError(dir.string() + ": parameter " + rec.name + " does not fit mode " + model::mode_name(s.config.mode));
    }
    s.params.emplace(rec.name, ad::Tensor::from(rec.shape, std::move(rec.values), true));
  }
  if (s.params.size() != shapes.size()) throw TrainingError(dir.string() + ": checkpoint is missing parameters");
  std::ifstream freeze(dir / "freeze.txt");
  for (std::string line; std::getline(freeze, line);) {
    if (line.empty()) continue;
    if (!s.params.count(line)) throw TrainingError(dir.string() + ": freeze list names unknown parameter " + line);
    s.frozen.insert(line);
    s.params.at(line).set_requires_grad(false);
  }
  for (auto& rec : ad::read_tensor_file(dir / "optimizer.lct")) {
    const bool first = rec.name.rfind("m/", 0) == 0;
    const auto name = rec.name.substr(2);
    auto& mom = s.moments[name];
    (first ? mom.m : mom.v) = std::move(rec.values);
  }
  if (vocab) *vocab = bpe::Vocabulary::load(dir / "vocab.bpe");
  return s;
}

}  // namespace lingua::train
