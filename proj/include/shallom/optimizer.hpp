#ifndef SHALLOM_OPTIMIZER_HPP
#define SHALLOM_OPTIMIZER_HPP

#include <cmath>
#include <cstdint>

#include "shallom/errors.hpp"
#include "shallom/model.hpp"

namespace shallom {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer state. Dense tensors are updated every step;
/// embedding rows only when they carry gradient (lazy update), and their
/// moments are left untouched otherwise. Bias correction uses the global step.
template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  explicit Adam(const ModelParams<Scalar>& params, AdamConfig config = {}) : config_(config) {
    entity_m_ = RowMatrix<Scalar>::Zero(params.entity.rows(), params.entity.cols());
    entity_v_ = entity_m_;
    hw_m_ = Matrix<Scalar>::Zero(params.hidden_weight.rows(), params.hidden_weight.cols());
    hw_v_ = hw_m_;
    hb_m_ = Vector<Scalar>::Zero(params.hidden_bias.size());
    hb_v_ = hb_m_;
    ow_m_ = Matrix<Scalar>::Zero(params.output_weight.rows(), params.output_weight.cols());
    ow_v_ = ow_m_;
    ob_m_ = Vector<Scalar>::Zero(params.output_bias.size());
    ob_v_ = ob_m_;
  }

  std::int64_t steps() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }

  void step(ModelParams<Scalar>& params, const Gradients<Scalar>& grads, double learning_rate) {
    if (hw_m_.rows() != params.hidden_weight.rows() || hw_m_.cols() != params.hidden_weight.cols() ||
        entity_m_.rows() != params.entity.rows() || ow_m_.rows() != params.output_weight.rows())
      throw ShapeError("optimizer state does not match the model shape");
    if (grads.hidden_weight.rows() != params.hidden_weight.rows() ||
        grads.hidden_weight.cols() != params.hidden_weight.cols() ||
        grads.output_weight.rows() != params.output_weight.rows() ||
        grads.output_weight.cols() != params.output_weight.cols() ||
        grads.entity_grad.rows() != static_cast<Eigen::Index>(grads.entity_rows.size()) ||
        grads.entity_grad.cols() != params.entity.cols())
      throw ShapeError("gradient shapes do not match the model");

    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    const Scalar b1 = static_cast<Scalar>(config_.beta1);
    const Scalar b2 = static_cast<Scalar>(config_.beta2);
    const Scalar lr = static_cast<Scalar>(learning_rate);
    const Scalar inv_c1 = static_cast<Scalar>(1.0 / c1);
    const Scalar inv_c2 = static_cast<Scalar>(1.0 / c2);
    const Scalar eps = static_cast<Scalar>(config_.epsilon);

    auto update = [&](auto&& w, auto&& m, auto&& v, const auto& g) {
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.cwiseAbs2();
      w.array() -= lr * (m.array() * inv_c1) / ((v.array() * inv_c2).sqrt() + eps);
    };

    update(params.hidden_weight, hw_m_, hw_v_, grads.hidden_weight);
    update(params.hidden_bias, hb_m_, hb_v_, grads.hidden_bias);
    update(params.output_weight, ow_m_, ow_v_, grads.output_weight);
    update(params.output_bias, ob_m_, ob_v_, grads.output_bias);
    for (std::size_t i = 0; i < grads.entity_rows.size(); ++i) {
      const auto e = grads.entity_rows[i];
      check_entity(params, e);
      update(params.entity.row(e), entity_m_.row(e), entity_v_.row(e),
             grads.entity_grad.row(static_cast<Eigen::Index>(i)));
      if (!params.entity.row(e).allFinite())
        throw NumericError("optimizer step produced a non-finite embedding for entity " + std::to_string(e));
    }

    if (!params.hidden_weight.allFinite() || !params.hidden_bias.allFinite() ||
        !params.output_weight.allFinite() || !params.output_bias.allFinite())
      throw NumericError("optimizer step produced non-finite layer weights");
  }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  RowMatrix<Scalar> entity_m_, entity_v_;
  Matrix<Scalar> hw_m_, hw_v_;
  Vector<Scalar> hb_m_, hb_v_;
  Matrix<Scalar> ow_m_, ow_v_;
  Vector<Scalar> ob_m_, ob_v_;
};

}  // namespace shallom

#endif  // SHALLOM_OPTIMIZER_HPP
