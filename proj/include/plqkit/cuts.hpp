#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "plqkit/error.hpp"

namespace plqkit {

/// Partition of n input pieces into r contiguous, nonempty blocks, stored
/// as the r - 1 interior breakpoint indices where a new block starts.
/// Block j (0-based) covers pieces [cut_{j-1}, cut_j) with cut_{-1} = 0
/// and cut_{r-1} = n.
class CutAssignment {
 public:
  CutAssignment() = default;
  CutAssignment(std::size_t n, std::vector<std::size_t> cuts) : n_(n), cuts_(std::move(cuts)) {
    if (n_ == 0) throw Error(ErrorCode::InvalidArgument, "cut assignment needs n >= 1");
    std::size_t prev = 0;
    for (std::size_t k = 0; k < cuts_.size(); ++k) {
      if (cuts_[k] <= prev || cuts_[k] >= n_) {
        throw Error(ErrorCode::InvalidArgument, "cuts must be strictly increasing within 1..n-1", k);
      }
      prev = cuts_[k];
    }
  }

  static CutAssignment identity(std::size_t n) {
    std::vector<std::size_t> c;
    for (std::size_t i = 1; i < n; ++i) c.push_back(i);
    return {n, std::move(c)};
  }

  std::size_t n() const { return n_; }
  std::size_t r() const { return cuts_.size() + 1; }
  const std::vector<std::size_t>& cuts() const { return cuts_; }

  std::size_t block_begin(std::size_t j) const { return j == 0 ? 0 : cuts_[j - 1]; }
  std::size_t block_end(std::size_t j) const { return j + 1 == r() ? n_ : cuts_[j]; }

  std::size_t block_of(std::size_t piece) const {
    std::size_t j = 0;
    while (j < cuts_.size() && cuts_[j] <= piece) ++j;
    return j;
  }

  /// 0/1 matrix with rows 0 and n + 1 as zero padding; row i (1..n) marks
  /// the block of piece i - 1.
  std::vector<std::vector<int>> u_matrix() const {
    std::vector<std::vector<int>> u(n_ + 2, std::vector<int>(r(), 0));
    for (std::size_t i = 0; i < n_; ++i) u[i + 1][block_of(i)] = 1;
    return u;
  }

  /// Inverse of u_matrix for matrices that encode a contiguous ordered
  /// partition; nullopt otherwise.
  static std::optional<CutAssignment> from_u_matrix(const std::vector<std::vector<int>>& u) {
    if (u.size() < 3) return std::nullopt;
    const std::size_t n = u.size() - 2;
    const std::size_t r = u[0].size();
    std::vector<std::size_t> owner(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::optional<std::size_t> j;
      for (std::size_t k = 0; k < r; ++k) {
        if (u[i + 1][k] == 1) {
          if (j) return std::nullopt;
          j = k;
        } else if (u[i + 1][k] != 0) {
          return std::nullopt;
        }
      }
      if (!j) return std::nullopt;
      owner[i] = *j;
    }
    if (owner.front() != 0 || owner.back() + 1 != r) return std::nullopt;
    std::vector<std::size_t> cuts;
    for (std::size_t i = 1; i < n; ++i) {
      if (owner[i] == owner[i - 1]) continue;
      if (owner[i] != owner[i - 1] + 1) return std::nullopt;
      cuts.push_back(i);
    }
    CutAssignment out(n, std::move(cuts));
    if (out.u_matrix() != u) return std::nullopt;
    return out;
  }

  friend bool operator==(const CutAssignment&, const CutAssignment&) = default;

 private:
  std::size_t n_ = 1;
  std::vector<std::size_t> cuts_;
};

}  // namespace plqkit
