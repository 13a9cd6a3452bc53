#include "mscatter/data.hpp"

#include <sstream>

namespace mscatter {

namespace {

Weights weights_from_groups(const std::vector<std::vector<Vector>>& groups) {
  std::vector<int> counts;
  counts.reserve(groups.size());
  for (const auto& g : groups) counts.push_back(static_cast<int>(g.size()));
  return Weights::from_counts(counts);
}

}  // namespace

GroupedSample::GroupedSample(std::vector<std::vector<Vector>> groups)
    : groups_(std::move(groups)), weights_(weights_from_groups(groups_)) {
  if (groups_.empty()) throw std::invalid_argument("GroupedSample: no groups");
  for (size_t k = 0; k < groups_.size(); ++k) {
    if (groups_[k].empty()) {
      std::ostringstream os;
      os << "GroupedSample: group " << k << " is empty";
      throw std::invalid_argument(os.str());
    }
    for (const auto& x : groups_[k]) {
      if (p_ == 0) p_ = x.size();
      if (x.size() != p_) {
        std::ostringstream os;
        os << "GroupedSample: observation of dimension " << x.size() << " in group " << k
           << ", expected " << p_;
        throw std::invalid_argument(os.str());
      }
    }
    total_ += static_cast<int>(groups_[k].size());
  }
  if (p_ < 1) throw std::invalid_argument("GroupedSample: dimension must be >= 1");
}

}  // namespace mscatter
