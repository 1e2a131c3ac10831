#include "promptrec/mtl.hpp"

#include <cmath>

#include "promptrec/errors.hpp"

namespace promptrec {

namespace {

void require_nonzero(double lambda) {
  if (lambda == 0.0) throw DomainError("uncertainty weight must be nonzero");
}

TaskTerm fixed_term(double loss, double lambda) { return {lambda * loss, lambda, loss}; }

TaskTerm kendall_term(double loss, double lambda) {
  require_nonzero(lambda);
  const double l2 = lambda * lambda;
  return {loss / (2.0 * l2) + std::log(lambda), 1.0 / (2.0 * l2), -loss / (l2 * lambda) + 1.0 / lambda};
}

TaskTerm positive_term(double loss, double lambda) {
  require_nonzero(lambda);
  const double l2 = lambda * lambda;
  return {loss / (2.0 * l2) + std::log1p(l2), 1.0 / (2.0 * l2), -loss / (l2 * lambda) + 2.0 * lambda / (1.0 + l2)};
}

}  // namespace

std::string_view to_string(LossForm form) {
  switch (form) {
    case LossForm::kFixed:
      return "fixed";
    case LossForm::kKendall:
      return "kendall";
    case LossForm::kPositive:
      return "positive";
  }
  return "positive";
}

std::optional<LossForm> parse_loss_form(std::string_view name) {
  if (name == "fixed") return LossForm::kFixed;
  if (name == "kendall") return LossForm::kKendall;
  if (name == "positive") return LossForm::kPositive;
  return std::nullopt;
}

double joint_loss_fixed(double loss_s, double loss_r, double lambda_s, double lambda_r) {
  return lambda_r * loss_r + lambda_s * loss_s;
}

double joint_loss_kendall(double loss_s, double loss_r, double lambda_s, double lambda_r) {
  return kendall_term(loss_s, lambda_s).value + kendall_term(loss_r, lambda_r).value;
}

double joint_loss_positive(double loss_s, double loss_r, double lambda_s, double lambda_r) {
  return positive_term(loss_s, lambda_s).value + positive_term(loss_r, lambda_r).value;
}

TaskTerm task_term(LossForm form, double loss, double lambda) {
  switch (form) {
    case LossForm::kFixed:
      return fixed_term(loss, lambda);
    case LossForm::kKendall:
      return kendall_term(loss, lambda);
    case LossForm::kPositive:
      return positive_term(loss, lambda);
  }
  return positive_term(loss, lambda);
}

JointLoss combine(LossForm form, double loss_s, double loss_r, const TaskWeights& weights) {
  const TaskTerm s = task_term(form, loss_s, weights.lambda_s);
  const TaskTerm r = task_term(form, loss_r, weights.lambda_r);
  return {s.value + r.value, s.d_loss, r.d_loss, s.d_lambda, r.d_lambda};
}

double clip_lambda(double lambda) {
  if (std::abs(lambda) >= kMinLambdaMagnitude) return lambda;
  return lambda < 0.0 ? -kMinLambdaMagnitude : kMinLambdaMagnitude;
}

}  // namespace promptrec
