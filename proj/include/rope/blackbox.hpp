#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rope/linear_model.hpp"
#include "rope/rules_model.hpp"
#include "rope/vec.hpp"

namespace rope {

// Uniform query contract over every classifier this library can explain.
// Handles must be total on all finite vectors of the declared dimension
// (robust training queries them at perturbed, off-distribution points) and
// deterministic. Built-in handles are immutable after training and safe for
// concurrent queries.
class BlackBoxHandle {
 public:
  struct Impl {
    virtual ~Impl() = default;
    virtual int query(const Vec& x) const = 0;
    virtual std::vector<int> query_batch(const Matrix& xs) const {
      std::vector<int> ys;
      ys.reserve(xs.size());
      for (const Vec& x : xs) ys.push_back(query(x));
      return ys;
    }
    virtual bool has_score() const { return false; }
    virtual double score(const Vec&) const {
      throw std::logic_error("black box does not expose a score");
    }
    virtual int dim() const = 0;
    virtual std::string kind() const = 0;
  };

  BlackBoxHandle() = default;
  explicit BlackBoxHandle(std::shared_ptr<const Impl> impl)
      : impl_(std::move(impl)) {}

  bool valid() const { return impl_ != nullptr; }

  int query(const Vec& x) const {
    check_dim(x);
    return impl_->query(x);
  }

  std::vector<int> query_batch(const Matrix& xs) const {
    for (const Vec& x : xs) check_dim(x);
    return impl_->query_batch(xs);
  }

  bool has_score() const { return impl_->has_score(); }

  // Real-valued output in [0, 1]; only meaningful when has_score().
  double score(const Vec& x) const {
    check_dim(x);
    return impl_->score(x);
  }

  int dim() const { return impl_->dim(); }
  std::string kind() const { return impl_->kind(); }

 private:
  void check_dim(const Vec& x) const {
    if (static_cast<int>(x.size()) != impl_->dim())
      throw std::invalid_argument("black box query: dimension mismatch (got " +
                                  std::to_string(x.size()) + ", expected " +
                                  std::to_string(impl_->dim()) + ")");
  }

  std::shared_ptr<const Impl> impl_;
};

namespace detail {

class FunctionBlackBox final : public BlackBoxHandle::Impl {
 public:
  FunctionBlackBox(int dim, std::function<int(const Vec&)> fn,
                   std::function<double(const Vec&)> score, std::string kind)
      : dim_(dim),
        fn_(std::move(fn)),
        score_(std::move(score)),
        kind_(std::move(kind)) {}

  int query(const Vec& x) const override { return fn_(x); }
  bool has_score() const override { return static_cast<bool>(score_); }
  double score(const Vec& x) const override {
    if (!score_) throw std::logic_error("black box does not expose a score");
    return score_(x);
  }
  int dim() const override { return dim_; }
  std::string kind() const override { return kind_; }

 private:
  int dim_;
  std::function<int(const Vec&)> fn_;
  std::function<double(const Vec&)> score_;
  std::string kind_;
};

}  // namespace detail

inline BlackBoxHandle make_function_blackbox(
    int dim, std::function<int(const Vec&)> fn,
    std::function<double(const Vec&)> score = nullptr,
    std::string kind = "function") {
  return BlackBoxHandle(std::make_shared<detail::FunctionBlackBox>(
      dim, std::move(fn), std::move(score), std::move(kind)));
}

// Adapts an interpretable model as a queryable black box, used by the
// correctness and stability experiments where the ground truth is known.
inline BlackBoxHandle wrap_interpretable(const LinearExplanation& model,
                                         std::string kind = "linear") {
  auto copy = std::make_shared<LinearExplanation>(model);
  return make_function_blackbox(
      copy->dim(), [copy](const Vec& x) { return copy->predict(x); },
      [copy](const Vec& x) { return copy->score01(x); }, std::move(kind));
}

inline BlackBoxHandle wrap_interpretable(const DecisionSet& model, int dim) {
  auto copy = std::make_shared<DecisionSet>(model);
  return make_function_blackbox(
      dim, [copy](const Vec& x) { return copy->predict(x); },
      [copy](const Vec& x) { return static_cast<double>(copy->predict(x)); },
      "decision_set");
}

}  // namespace rope
