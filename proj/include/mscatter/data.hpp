#ifndef MSCATTER_DATA_HPP
#define MSCATTER_DATA_HPP

#include <vector>

#include "mscatter/distance.hpp"
#include "mscatter/linalg.hpp"

namespace mscatter {

// Observations partitioned into K groups sharing one dimension p.  Group
// relative sizes n_k / N double as the weights pi_k used by the penalized
// objectives.
class GroupedSample {
 public:
  explicit GroupedSample(std::vector<std::vector<Vector>> groups);

  int dim() const { return p_; }
  int group_count() const { return static_cast<int>(groups_.size()); }
  int group_size(int k) const { return static_cast<int>(groups_[static_cast<size_t>(k)].size()); }
  int total_size() const { return total_; }
  const std::vector<Vector>& group(int k) const { return groups_[static_cast<size_t>(k)]; }
  const Weights& weights() const { return weights_; }

 private:
  std::vector<std::vector<Vector>> groups_;
  Weights weights_;
  int p_ = 0;
  int total_ = 0;
};

}  // namespace mscatter

#endif
