#pragma once

#include <string>
#include <vector>

#include "graphfm/common.hpp"

namespace graphfm {

enum class MethodId;

// One tunable hyperparameter and its search range.
struct ParamSpec {
  enum class Kind { choice, lin_range, log_range, int_range };
  std::string name;
  Kind kind = Kind::choice;
  std::vector<double> choices;  // Kind::choice
  double lo = 0.0, hi = 0.0;    // ranges

  bool contains(double v) const;
  std::string describe() const;
};

// General settings shared by every method: lr, weight_decay, batch_size,
// decode_channels_lp, decode_layers_lp.
const std::vector<ParamSpec>& general_search_space();

// Method-specific search space.
const std::vector<ParamSpec>& method_search_space(MethodId m);

// Framework hyperparameters accepted in configs but not swept (defaults
// outside the published table).
const std::vector<ParamSpec>& method_extra_params(MethodId m);

const ParamSpec* find_param(const std::vector<ParamSpec>& specs, const std::string& name);

}  // namespace graphfm
