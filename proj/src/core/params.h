#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "core/autograd.h"

namespace gnvc {

// Named parameter registry shared by all models.  Registration order is the
// iteration order, which makes optimizer state and serialization stable for
// a fixed architecture.  Initial values are drawn from streams derived from
// (seed, parameter name), so adding a parameter never shifts another one's
// init.
template <class T>
struct ParamStore {
  std::vector<std::pair<std::string, Var<T>>> items;
  uint64_t seed = 0;

  explicit ParamStore(uint64_t seed_ = 0) : seed(seed_) {}

  Var<T> add(const std::string &name, Tensor<T> init) {
    for (auto &kv : items) GNVC_CHECK(kv.first != name, "duplicate parameter " + name);
    auto v = leaf(std::move(init), true);
    items.push_back({name, v});
    return v;
  }

  // Gaussian fan-in init, the default for conv / linear weights.
  Var<T> add_randn(const std::string &name, std::vector<int64_t> shape, int64_t fan_in) {
    Rng rng = Rng::derive(seed, "init/" + name);
    T sd = T(1.0 / std::sqrt(double(fan_in)));
    return add(name, Tensor<T>::randn(std::move(shape), rng, sd));
  }

  Var<T> add_zeros(const std::string &name, std::vector<int64_t> shape) {
    return add(name, Tensor<T>(std::move(shape)));
  }

  Var<T> add_full(const std::string &name, std::vector<int64_t> shape, T value) {
    return add(name, Tensor<T>(std::move(shape), value));
  }

  Var<T> find(const std::string &name) const {
    for (auto &kv : items)
      if (kv.first == name) return kv.second;
    fail_numeric("unknown parameter " + name);
  }

  void set_trainable(bool on) {
    for (auto &kv : items) kv.second->requires_grad = on;
  }

  // Scoped variant: toggles only parameters whose name starts with prefix.
  void set_trainable(const std::string &prefix, bool on) {
    bool hit = false;
    for (auto &kv : items)
      if (kv.first.rfind(prefix, 0) == 0) {
        kv.second->requires_grad = on;
        hit = true;
      }
    GNVC_CHECK(hit, "no parameters under prefix " + prefix);
  }

  void zero_grad() {
    for (auto &kv : items) kv.second->grad = Tensor<T>();
  }

  int64_t count() const {
    int64_t n = 0;
    for (auto &kv : items) n += kv.second->val.numel();
    return n;
  }

  // Byte-stable digest of parameter values, for freeze contracts.  prefix
  // narrows the digest to one parameter group.
  uint64_t digest(const std::string &prefix = "") const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (auto &kv : items) {
      if (!prefix.empty() && kv.first.rfind(prefix, 0) != 0) continue;
      h = fnv1a64(kv.first.data(), kv.first.size(), h);
      h = fnv1a64(kv.second->val.ptr(), sizeof(T) * size_t(kv.second->val.numel()), h);
    }
    return h;
  }

  std::map<std::string, Tensor<float>> state_dict() const {
    std::map<std::string, Tensor<float>> out;
    for (auto &kv : items) out[kv.first] = kv.second->val.template cast<float>();
    return out;
  }

  void load_state_dict(const std::map<std::string, Tensor<float>> &sd) {
    for (auto &kv : items) {
      auto it = sd.find(kv.first);
      if (it == sd.end()) fail_data("checkpoint missing parameter " + kv.first);
      GNVC_CHECK(it->second.numel() == kv.second->val.numel(),
                 "checkpoint size mismatch for " + kv.first);
      Tensor<T> v = it->second.template cast<T>();
      v.shape = kv.second->val.shape;
      kv.second->val = std::move(v);
    }
    for (auto &kv : sd)
      GNVC_CHECK(std::any_of(items.begin(), items.end(),
                             [&](auto &p) { return p.first == kv.first; }),
                 "checkpoint has unknown parameter " + kv.first);
  }
};

// Adam with global-norm gradient clipping.  Step order follows registration
// order of the stores passed in, so runs are reproducible.
template <class T>
struct Adam {
  struct Slot {
    Var<T> p;
    Tensor<T> m, v;
  };
  std::vector<Slot> slots;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double clip_norm = 1.0; // <= 0 disables
  int64_t t = 0;

  void attach(ParamStore<T> &store) {
    for (auto &kv : store.items)
      slots.push_back({kv.second, Tensor<T>(kv.second->val.shape), Tensor<T>(kv.second->val.shape)});
  }

  double grad_norm() const {
    double s = 0;
    for (auto &sl : slots) {
      if (sl.p->grad.numel() == 0) continue;
      for (int64_t i = 0; i < sl.p->grad.numel(); ++i) s += double(sl.p->grad[i]) * double(sl.p->grad[i]);
    }
    return std::sqrt(s);
  }

  void step(double lr) {
    ++t;
    double cs = 1.0;
    if (clip_norm > 0) {
      double n = grad_norm();
      if (n > clip_norm) cs = clip_norm / n;
    }
    double bc1 = 1.0 - std::pow(beta1, double(t));
    double bc2 = 1.0 - std::pow(beta2, double(t));
    for (auto &sl : slots) {
      if (sl.p->grad.numel() == 0) continue; // no gradient this step
      auto &g = sl.p->grad;
      for (int64_t i = 0; i < g.numel(); ++i) {
        double gi = double(g[i]) * cs;
        double m = beta1 * double(sl.m[i]) + (1 - beta1) * gi;
        double v = beta2 * double(sl.v[i]) + (1 - beta2) * gi * gi;
        sl.m[i] = T(m);
        sl.v[i] = T(v);
        sl.p->val[i] -= T(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
      }
    }
  }

  void zero_grad() {
    for (auto &sl : slots) sl.p->grad = Tensor<T>();
  }
};

} // namespace gnvc
