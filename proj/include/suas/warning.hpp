#pragma once

#include <string>
#include <vector>

namespace suas {

// Non-fatal diagnostic carried into run reports.
struct Warning {
  std::string code;
  std::string message;
};

using Warnings = std::vector<Warning>;

}  // namespace suas
