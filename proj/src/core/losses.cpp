#include "neo/losses.hpp"

#include <cmath>

#include "neo/common.hpp"

namespace neo {

std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::kDpoStandard: return "dpo_standard";
    case LossVariant::kDpoAsPrinted: return "dpo_as_printed";
    case LossVariant::kApoUpStandard: return "apo_up_standard";
    case LossVariant::kApoUpAsPrinted: return "apo_up_as_printed";
  }
  return "unknown";
}

LossVariant parse_loss_variant(std::string_view name) {
  for (auto v : {LossVariant::kDpoStandard, LossVariant::kDpoAsPrinted, LossVariant::kApoUpStandard,
                 LossVariant::kApoUpAsPrinted}) {
    if (to_string(v) == name) return v;
  }
  fail(ErrorCode::kInvalidArgument, "unknown loss variant '" + std::string(name) + "'");
}

double neg_log_sigmoid(double z) {
  // softplus(-z) = max(-z, 0) + log1p(exp(-|z|))
  return std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

namespace {

// d/dz of -log(sigmoid(z)) = -sigmoid(-z)
double neg_log_sigmoid_grad(double z) {
  if (z >= 0) {
    const double e = std::exp(-z);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(z));
}

void check_inputs(const PairLogProbs& p, double beta) {
  require(beta > 0.0 && std::isfinite(beta), ErrorCode::kInvalidArgument, "beta must be positive");
  require(std::isfinite(p.lp_c) && std::isfinite(p.lp_r) && std::isfinite(p.lp0_c) &&
              std::isfinite(p.lp0_r),
          ErrorCode::kNumeric, "preference loss: non-finite log-probability");
}

bool is_standard(LossVariant v) {
  return v == LossVariant::kDpoStandard || v == LossVariant::kApoUpStandard;
}

bool is_apo(LossVariant v) {
  return v == LossVariant::kApoUpStandard || v == LossVariant::kApoUpAsPrinted;
}

LossValue dpo_term(const PairLogProbs& p, double beta, bool standard) {
  const double ref_ratio = p.lp0_c - p.lp0_r;
  const double z = beta * ((p.lp_c - p.lp_r) + (standard ? -ref_ratio : ref_ratio));
  const double g = neg_log_sigmoid_grad(z) * beta;
  return {neg_log_sigmoid(z), g, -g};
}

LossValue anchor_term(const PairLogProbs& p, double beta) {
  const double z = beta * (p.lp_c - p.lp0_c);
  return {neg_log_sigmoid(z), neg_log_sigmoid_grad(z) * beta, 0.0};
}

}  // namespace

double dpo_loss(const PairLogProbs& p, double beta, LossVariant variant) {
  check_inputs(p, beta);
  return dpo_term(p, beta, is_standard(variant)).value;
}

double apo_up_loss(const PairLogProbs& p, double beta, LossVariant variant) {
  check_inputs(p, beta);
  return dpo_term(p, beta, is_standard(variant)).value + anchor_term(p, beta).value;
}

LossValue preference_loss(const PairLogProbs& p, double beta, LossVariant variant) {
  check_inputs(p, beta);
  LossValue out = dpo_term(p, beta, is_standard(variant));
  if (is_apo(variant)) {
    const LossValue a = anchor_term(p, beta);
    out.value += a.value;
    out.d_lp_c += a.d_lp_c;
  }
  return out;
}

}  // namespace neo
