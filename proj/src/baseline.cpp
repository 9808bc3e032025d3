#include "alrite/learner.hpp"

namespace alrite {

namespace {

Matrix with_intercept(const Matrix& x) {
  Matrix design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  return design;
}

}  // namespace

OlsTLearner fit_ols_t_learner(const Dataset& data, std::span<const Index> indices) {
  const Dataset part = data.subset(indices);
  part.require_both_arms();
  OlsTLearner model;
  for (int arm : {0, 1}) {
    const IndexList rows = part.arm_indices(arm);
    const Dataset sub = part.subset(rows);
    const Vector coef = with_intercept(sub.x).colPivHouseholderQr().solve(sub.y);
    (arm == 1 ? model.coef1 : model.coef0) = coef;
  }
  return model;
}

Vector predict_mu(const OlsTLearner& model, const Matrix& x, int arm) {
  const Vector& coef = arm == 1 ? model.coef1 : model.coef0;
  if (x.cols() + 1 != coef.size()) throw ShapeError("ols: covariate width mismatch");
  return with_intercept(x) * coef;
}

Vector predict_tau(const OlsTLearner& model, const Matrix& x) {
  return predict_mu(model, x, 1) - predict_mu(model, x, 0);
}

}  // namespace alrite
