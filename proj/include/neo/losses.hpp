#pragma once

#include <string>
#include <string_view>

namespace neo {

// Sequence log-probabilities of a preference pair under the trained
// parameters (lp_c, lp_r) and the reference snapshot (lp0_c, lp0_r).
struct PairLogProbs {
  double lp_c = 0.0;
  double lp_r = 0.0;
  double lp0_c = 0.0;
  double lp0_r = 0.0;
};

// STANDARD subtracts the reference log-ratio inside the sigmoid, as in the
// usual DPO formulation. AS_PRINTED adds it, matching the typeset equation
// the APO-up variant was published with.
enum class LossVariant {
  kDpoStandard,
  kDpoAsPrinted,
  kApoUpStandard,
  kApoUpAsPrinted,
};

std::string_view to_string(LossVariant v);
LossVariant parse_loss_variant(std::string_view name);

// Loss value and its partial derivatives with respect to lp_c and lp_r. The
// reference terms are constants.
struct LossValue {
  double value = 0.0;
  double d_lp_c = 0.0;
  double d_lp_r = 0.0;
};

// -log(sigmoid(z)), stable for large |z|.
double neg_log_sigmoid(double z);

double dpo_loss(const PairLogProbs& p, double beta, LossVariant variant);
double apo_up_loss(const PairLogProbs& p, double beta, LossVariant variant);

// Dispatches on the variant: DPO_* -> dpo_loss, APO_UP_* -> apo_up_loss.
LossValue preference_loss(const PairLogProbs& p, double beta, LossVariant variant);

}  // namespace neo
