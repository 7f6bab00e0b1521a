#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "affcode/datamodel.hpp"

namespace affcode {

inline constexpr std::size_t kDefaultTopZ = 10;

/// A channel-axis slice of a filter map at one spatial position.
struct Prototype {
  std::vector<float> vector;        // length C
  std::uint32_t source_channel = 0;  // channel whose global max selected this position
  std::uint32_t h = 0;
  std::uint32_t w = 0;
  std::uint32_t rank = 1;  // 1-based

  friend bool operator==(const Prototype&, const Prototype&) = default;
};

/// The unique top-ranked prototypes of one image at one layer.
///
/// Holds at most Z prototypes with pairwise distinct positions. When fewer
/// than Z unique positions exist, `at_rank` repeats the last one so every
/// image still contributes exactly Z affinity functions.
class PrototypeSet {
 public:
  PrototypeSet() = default;
  PrototypeSet(std::string instance_id, std::string layer, std::vector<Prototype> prototypes,
               std::size_t requested);

  const std::string& instance_id() const noexcept { return instance_id_; }
  const std::string& layer() const noexcept { return layer_; }
  const std::vector<Prototype>& prototypes() const noexcept { return prototypes_; }
  std::size_t size() const noexcept { return prototypes_.size(); }
  std::size_t requested() const noexcept { return requested_; }

  /// Number of ranks in 1..requested served by repeating the last prototype.
  std::size_t padded() const noexcept {
    return requested_ > prototypes_.size() ? requested_ - prototypes_.size() : 0;
  }

  /// Prototype for rank z in 1..requested (padding applied past size()).
  const Prototype& at_rank(std::size_t z) const;

 private:
  std::string instance_id_;
  std::string layer_;
  std::vector<Prototype> prototypes_;
  std::size_t requested_ = 0;
};

/// One prototype per (h, w), in row-major order. Ranks number positions.
std::vector<Prototype> extract_all_prototypes(const FilterMap& map);

/// Ranks channels by their global max activation (ties: lower channel), takes
/// each ranked channel's argmax position (ties: lower h, then lower w), drops
/// positions already taken and continues down the ranking until Z unique
/// positions are found or the channels run out.
PrototypeSet select_top_z(const FilterMap& map, std::size_t z);

}  // namespace affcode
