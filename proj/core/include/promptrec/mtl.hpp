#pragma once

// Two-task loss combinations over the explanation loss L_S and the rating
// loss L_R with weights lambda_S, lambda_R:
//
//   fixed:    lambda_R L_R + lambda_S L_S
//   kendall:  sum_t L_t / (2 lambda_t^2) + log(lambda_t)
//   positive: sum_t L_t / (2 lambda_t^2) + log(1 + lambda_t^2)
//
// The kendall form goes negative once the weights shrink; the positive form
// is bounded below by zero for nonnegative task losses.

#include <optional>
#include <string>
#include <string_view>

namespace promptrec {

enum class LossForm { kFixed, kKendall, kPositive };

std::string_view to_string(LossForm form);
/// Accepts "fixed", "kendall", "positive".
std::optional<LossForm> parse_loss_form(std::string_view name);

struct TaskWeights {
  double lambda_s = 1.0;
  double lambda_r = 1.0;
  friend bool operator==(const TaskWeights&, const TaskWeights&) = default;
};

/// Smallest admissible |lambda|; the trainer clips to it after every step.
inline constexpr double kMinLambdaMagnitude = 1e-4;

double joint_loss_fixed(double loss_s, double loss_r, double lambda_s, double lambda_r);
/// Throws DomainError when either lambda is 0.
double joint_loss_kendall(double loss_s, double loss_r, double lambda_s, double lambda_r);
/// Throws DomainError when either lambda is 0.
double joint_loss_positive(double loss_s, double loss_r, double lambda_s, double lambda_r);

/// Value of a form plus its partial derivatives.
struct JointLoss {
  double value = 0.0;
  double d_loss_s = 0.0;
  double d_loss_r = 0.0;
  double d_lambda_s = 0.0;
  double d_lambda_r = 0.0;
};

JointLoss combine(LossForm form, double loss_s, double loss_r, const TaskWeights& weights);

struct TaskTerm {
  double value = 0.0;
  double d_loss = 0.0;
  double d_lambda = 0.0;
};

/// One task's summand of `form`; also used alone when the other task is disabled.
TaskTerm task_term(LossForm form, double loss, double lambda);

/// Keeps |lambda| >= kMinLambdaMagnitude, preserving sign (0 maps to +min).
double clip_lambda(double lambda);

}  // namespace promptrec
