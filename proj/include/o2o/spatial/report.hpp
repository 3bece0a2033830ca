#pragma once

#include <ostream>
#include <span>
#include <string>

#include "o2o/spatial/gwr.hpp"

namespace o2o::spatial {

// feature,mean_coef,std_err,p_value,sd,min,max,bandwidth
void write_summary(std::ostream& out, const GwrFit& fit);
// One row per fitted location with its coefficients and standard errors.
void write_local_coefficients(std::ostream& out, const GwrFit& fit);
// u,v,probability,label,extrapolated
void write_prediction(std::ostream& out, std::span<const Prediction> predictions);
// Heat map of predicted treatment-dominance probability over the aligned frame.
std::string prediction_svg(std::span<const Prediction> predictions, double cell_size_deg);

}  // namespace o2o::spatial
