#include "affcode/mapping.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "affcode/error.hpp"

namespace affcode {
namespace {

struct Assignment {
  std::vector<int> col_of_row;
  std::vector<double> u, v;  // duals: cost(i, j) - u[i] - v[j] >= 0, tight on the matching
};

// Minimum-cost assignment on an n x n cost matrix.
Assignment min_cost_assignment(const Matrix& cost) {
  const std::size_t n = cost.rows();
  if (n == 0) return {};
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based potentials; index 0 is the virtual source column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> row_of_col(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = row_of_col[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of_col[j0] = row_of_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out{std::vector<int>(n, -1), std::vector<double>(u.begin() + 1, u.end()),
                 std::vector<double>(v.begin() + 1, v.end())};
  for (std::size_t j = 1; j <= n; ++j) out.col_of_row[row_of_col[j] - 1] = static_cast<int>(j - 1);
  return out;
}

void require_square_finite(const Matrix& w, const char* who) {
  if (w.rows() != w.cols() || w.rows() == 0) {
    throw InputError(fmt::format("{}: weight matrix must be square and non-empty, got {}x{}", who,
                                 w.rows(), w.cols()));
  }
  for (double x : w.data()) {
    if (!std::isfinite(x)) throw InputError(fmt::format("{}: non-finite weight", who));
  }
}

}  // namespace

Matrix mapping_weights(const Matrix& gamma, const DevSet& dev) {
  if (dev.empty()) throw InputError("mapping_weights: empty dev set");
  const std::size_t k_count = gamma.cols();
  if (static_cast<std::size_t>(dev.num_classes()) != k_count) {
    throw InputError(fmt::format("mapping_weights: dev set has K = {}, predictions have {} columns",
                                 dev.num_classes(), k_count));
  }
  Matrix w(k_count, k_count, 0.0);
  for (const auto& e : dev.entries()) {
    if (e.row >= gamma.rows()) {
      throw InputError(fmt::format("mapping_weights: dev row {} outside {} predictions", e.row,
                                   gamma.rows()));
    }
    const auto label = static_cast<std::size_t>(e.label);
    for (std::size_t k = 0; k < k_count; ++k) w(k, label) += gamma(e.row, k);
  }
  return w;
}

double mapping_objective(const Matrix& w, std::span<const int> g) {
  double total = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k) total += w(k, static_cast<std::size_t>(g[k]));
  return total;
}

std::vector<int> max_weight_assignment(const Matrix& w) {
  require_square_finite(w, "max_weight_assignment");
  const std::size_t n = w.rows();
  Matrix cost(n, n);
  double scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      cost(i, j) = -w(i, j);
      scale += std::abs(w(i, j));
    }
  }
  const auto solved = min_cost_assignment(cost);
  // An assignment is optimal iff it only uses edges of zero reduced cost.
  const double slack = 1e-12 * scale;
  auto tight = [&](std::size_t i, std::size_t j) {
    return cost(i, j) - solved.u[i] - solved.v[j] <= slack;
  };

  // Fix rows in order, each to the smallest tight column that still admits a
  // tight perfect matching. Moving row k onto column c needs an alternating
  // path from c's current row to the column k gives up.
  std::vector<int> col_of_row = solved.col_of_row;
  std::vector<int> row_of_col(n);
  for (std::size_t i = 0; i < n; ++i) row_of_col[static_cast<std::size_t>(col_of_row[i])] = static_cast<int>(i);
  std::vector<bool> fixed_col(n, false);
  std::vector<int> parent_col(n);
  std::vector<bool> seen(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t freed = static_cast<std::size_t>(col_of_row[k]);
    for (std::size_t c = 0; c < n; ++c) {
      if (fixed_col[c] || !tight(k, c)) continue;
      if (c == freed) break;
      // BFS over unfixed columns; each visited column's row moves to the next column.
      std::fill(seen.begin(), seen.end(), false);
      std::fill(parent_col.begin(), parent_col.end(), -1);
      std::vector<std::size_t> frontier{c};
      seen[c] = true;
      bool found = false;
      for (std::size_t head = 0; head < frontier.size() && !found; ++head) {
        const std::size_t from = frontier[head];
        const auto r = static_cast<std::size_t>(row_of_col[from]);
        for (std::size_t j = 0; j < n; ++j) {
          if (seen[j] || fixed_col[j] || !tight(r, j)) continue;
          seen[j] = true;
          parent_col[j] = static_cast<int>(from);
          if (j == freed) {
            found = true;
            break;
          }
          frontier.push_back(j);
        }
      }
      if (!found) continue;
      for (std::size_t j = freed; j != c;) {
        const auto from = static_cast<std::size_t>(parent_col[j]);
        const int r = row_of_col[from];
        col_of_row[static_cast<std::size_t>(r)] = static_cast<int>(j);
        row_of_col[j] = r;
        j = from;
      }
      col_of_row[k] = static_cast<int>(c);
      row_of_col[c] = static_cast<int>(k);
      break;
    }
    fixed_col[static_cast<std::size_t>(col_of_row[k])] = true;
  }
  return col_of_row;
}

ClusterClassMapping solve_mapping(const Matrix& w) {
  require_square_finite(w, "solve_mapping");
  const std::size_t k_count = w.rows();
  ClusterClassMapping out;
  out.weights = w;
  if (k_count <= 3) {
    std::vector<int> perm(k_count);
    std::iota(perm.begin(), perm.end(), 0);
    out.g = perm;
    out.objective = mapping_objective(w, perm);
    while (std::next_permutation(perm.begin(), perm.end())) {
      const double value = mapping_objective(w, perm);
      if (value > out.objective) {
        out.objective = value;
        out.g = perm;
      }
    }
    return out;
  }
  out.g = max_weight_assignment(w);
  out.objective = mapping_objective(w, out.g);
  return out;
}

std::vector<int> two_class_mapping(const Matrix& gamma, const DevSet& dev) {
  if (gamma.cols() != 2 || dev.num_classes() != 2) {
    throw InputError("two_class_mapping: requires K = 2");
  }
  double class1_mass = 0.0;
  double class0_mass = 0.0;
  for (const auto& e : dev.entries()) {
    (e.label == 1 ? class1_mass : class0_mass) += gamma(e.row, 1);
  }
  if (class1_mass >= class0_mass) return {0, 1};
  return {1, 0};
}

bool is_bijection(std::span<const int> g, std::size_t k) {
  if (g.size() != k) return false;
  std::vector<bool> seen(k, false);
  for (int c : g) {
    if (c < 0 || static_cast<std::size_t>(c) >= k || seen[static_cast<std::size_t>(c)]) return false;
    seen[static_cast<std::size_t>(c)] = true;
  }
  return true;
}

Matrix apply_mapping(const Matrix& columns, std::span<const int> g) {
  if (!is_bijection(g, columns.cols())) {
    throw InputError(fmt::format("apply_mapping: mapping is not a bijection over {} classes",
                                 columns.cols()));
  }
  Matrix out(columns.rows(), columns.cols());
  for (std::size_t i = 0; i < columns.rows(); ++i) {
    for (std::size_t k = 0; k < columns.cols(); ++k) {
      out(i, static_cast<std::size_t>(g[k])) = columns(i, k);
    }
  }
  return out;
}

std::vector<int> invert_mapping(std::span<const int> g) {
  if (!is_bijection(g, g.size())) throw InputError("invert_mapping: mapping is not a bijection");
  std::vector<int> inv(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) inv[static_cast<std::size_t>(g[k])] = static_cast<int>(k);
  return inv;
}

}  // namespace affcode
