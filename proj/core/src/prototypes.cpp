#include "affcode/prototypes.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "affcode/error.hpp"

namespace affcode {
namespace {

std::vector<float> channel_slice(const FilterMap& map, std::uint32_t h, std::uint32_t w) {
  std::vector<float> v(map.channels());
  for (std::uint32_t c = 0; c < map.channels(); ++c) v[c] = map.at(c, h, w);
  return v;
}

struct ChannelPeak {
  float activation;
  std::uint32_t channel;
  std::uint32_t h;
  std::uint32_t w;
};

ChannelPeak channel_peak(const FilterMap& map, std::uint32_t c) {
  ChannelPeak peak{map.at(c, 0, 0), c, 0, 0};
  for (std::uint32_t h = 0; h < map.height(); ++h) {
    for (std::uint32_t w = 0; w < map.width(); ++w) {
      const float v = map.at(c, h, w);
      if (v > peak.activation) peak = {v, c, h, w};
    }
  }
  return peak;
}

}  // namespace

PrototypeSet::PrototypeSet(std::string instance_id, std::string layer,
                           std::vector<Prototype> prototypes, std::size_t requested)
    : instance_id_(std::move(instance_id)),
      layer_(std::move(layer)),
      prototypes_(std::move(prototypes)),
      requested_(requested) {
  if (prototypes_.empty()) throw InputError("prototype set: no prototypes");
  if (prototypes_.size() > requested_) {
    throw InputError("prototype set: more prototypes than requested");
  }
}

const Prototype& PrototypeSet::at_rank(std::size_t z) const {
  if (z == 0 || z > requested_) {
    throw InputError(fmt::format("prototype rank {} outside 1..{}", z, requested_));
  }
  return prototypes_[std::min(z, prototypes_.size()) - 1];
}

std::vector<Prototype> extract_all_prototypes(const FilterMap& map) {
  std::vector<Prototype> out;
  out.reserve(static_cast<std::size_t>(map.height()) * map.width());
  std::uint32_t rank = 1;
  for (std::uint32_t h = 0; h < map.height(); ++h) {
    for (std::uint32_t w = 0; w < map.width(); ++w) {
      out.push_back({channel_slice(map, h, w), 0, h, w, rank++});
    }
  }
  return out;
}

PrototypeSet select_top_z(const FilterMap& map, std::size_t z) {
  if (z == 0) throw InputError("select_top_z: Z must be at least 1");

  std::vector<ChannelPeak> peaks;
  peaks.reserve(map.channels());
  for (std::uint32_t c = 0; c < map.channels(); ++c) peaks.push_back(channel_peak(map, c));
  std::stable_sort(peaks.begin(), peaks.end(), [](const ChannelPeak& a, const ChannelPeak& b) {
    return a.activation > b.activation;
  });

  std::vector<Prototype> selected;
  std::set<std::pair<std::uint32_t, std::uint32_t>> taken;
  for (const auto& peak : peaks) {
    if (selected.size() == z) break;
    if (!taken.emplace(peak.h, peak.w).second) continue;
    selected.push_back({channel_slice(map, peak.h, peak.w), peak.channel, peak.h, peak.w,
                        static_cast<std::uint32_t>(selected.size() + 1)});
  }
  return PrototypeSet(map.instance_id(), map.layer(), std::move(selected), z);
}

}  // namespace affcode
