#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "suas/footprints.hpp"
#include "suas/geo_raster.hpp"
#include "suas/inference.hpp"

namespace suas::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitInternal = 3,
};

struct Environment {
  // Injectable wall clock for run reports; system clock when empty.
  std::function<std::chrono::system_clock::time_point()> clock;
};

// Backend spec: replay | random | constant:<class> | scoredir:<path>.
// `replay` needs the (registered) labelled footprints and raster transform.
std::unique_ptr<inference::SegmentationBackend> MakeBackend(
    std::string_view spec, std::uint64_t seed,
    const std::vector<footprints::BuildingFootprint>* truth, const geo::GeoTransform* transform);

// Full command line including the program name in args[0].
int RunCli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
           const Environment& env = {});

}  // namespace suas::cli
