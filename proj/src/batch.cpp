#include "driftlab/batch.hpp"

#include <stdexcept>

#include "driftlab/counters.hpp"

namespace driftlab {

std::string_view origin_name(Origin o) noexcept {
  switch (o) {
    case Origin::kData: return "data";
    case Origin::kForward: return "forward";
    case Origin::kBackward: return "backward";
    case Origin::kBootstrap: return "bootstrap";
  }
  return "unknown";
}

Batch::Batch(Matrix d, int time, Origin o) : data(std::move(d)), t(time), origin(o) {
  if (data.rows() < 1 || data.cols() < 1) throw std::invalid_argument("batch: empty");
  if (origin == Origin::kData && t != 0) {
    throw std::invalid_argument("batch: data origin requires t = 0");
  }
}

WorkCounters& counters() noexcept {
  static WorkCounters c;
  return c;
}

}  // namespace driftlab
