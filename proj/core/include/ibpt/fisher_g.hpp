#pragma once

// Parametric threshold for an encoder p_theta(z|x) through the Fisher
// information matrices of Z, Z|X and Z|Y with respect to theta.

#include <memory>

#include "ibpt/prob_core.hpp"
#include "ibpt/variation.hpp"

namespace ibpt {

// Contract for a differentiable encoder family.
class ParameterizedEncoder {
 public:
  virtual ~ParameterizedEncoder() = default;

  virtual std::size_t nx() const = 0;
  virtual std::size_t zdim() const = 0;
  virtual std::size_t num_params() const = 0;
  virtual const Vector& theta() const = 0;
  virtual void set_theta(const Vector& theta) = 0;
  virtual std::unique_ptr<ParameterizedEncoder> clone() const = 0;

  virtual Encoder encoder() const = 0;
  // Row x * |Z| + z holds d log p(z|x) / d theta.
  virtual Matrix score_zx() const = 0;
};

// p(z|x) = softmax_z(theta(x, z)); theta flattened as x * |Z| + z.
class TabularSoftmax final : public ParameterizedEncoder {
 public:
  explicit TabularSoftmax(Matrix logits);
  // Logits log p(z|x), with zero cells clamped to log(1e-300).
  static TabularSoftmax from_encoder(const Encoder& enc);

  std::size_t nx() const override { return nx_; }
  std::size_t zdim() const override { return nz_; }
  std::size_t num_params() const override { return nx_ * nz_; }
  const Vector& theta() const override { return theta_; }
  void set_theta(const Vector& theta) override;
  std::unique_ptr<ParameterizedEncoder> clone() const override;

  Encoder encoder() const override;
  Matrix score_zx() const override;
  Matrix logits() const;

 private:
  std::size_t nx_, nz_;
  Vector theta_;
};

struct FisherBundle {
  Matrix i_zx;  // sum_{x,z} p(x,z) s(z|x) s(z|x)'
  Matrix i_zy;  // sum_{y,z} p(y,z) s(z|y) s(z|y)'
  Matrix i_z;   // sum_z p(z) s(z) s(z)'
  std::size_t excluded_z = 0;
};

// Scores of log p(z) (row z) and log p(z|y) (row y * |Z| + z), obtained by
// the chain rule through the mixture over x. Rows of dead cells are zero.
Matrix score_z(const JointDistribution& joint, const ParameterizedEncoder& params);
Matrix score_zy(const JointDistribution& joint, const ParameterizedEncoder& params);

FisherBundle fisher_bundle(const JointDistribution& joint, const ParameterizedEncoder& params);

struct GThetaResult {
  double g_value = 0.0;  // +inf when the whitened pencil has nothing positive
  Vector delta_theta;    // attaining direction, un-whitened
  Eigen::Index rank = 0; // numerical rank of i_zx - i_z
  bool used_cholesky = false;
};

GThetaResult g_theta(const JointDistribution& joint, const ParameterizedEncoder& params);

// r(z|x) = delta_theta' d log p(z|x) / d theta.
PerturbationField induced_field(const ParameterizedEncoder& params, const Vector& delta_theta);

}  // namespace ibpt
