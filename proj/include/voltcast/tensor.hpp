#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace voltcast::tensor {

using Index = std::int64_t;

/// Dense multidimensional array over doubles.
///
/// The buffer linearization is fixed project-wide: the first index varies
/// fastest, i.e. element (i_1, ..., i_D) with 1-based indices i_d lives at
/// buffer position multi_index({i_1, ..., i_D}, shape) - 1. Every module
/// that reshapes, vectorizes or scatters coefficients relies on this one
/// convention.
class DenseTensor {
public:
    DenseTensor(std::vector<Index> shape, std::vector<double> data);

    /// Zero-initialized tensor.
    explicit DenseTensor(std::vector<Index> shape);

    const std::vector<Index>& shape() const { return shape_; }
    Index order() const { return static_cast<Index>(shape_.size()); }
    Index size() const { return static_cast<Index>(data_.size()); }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    /// Element access with 1-based multi-indices.
    double at(const std::vector<Index>& indices) const;
    double& at(const std::vector<Index>& indices);

    /// Reshape to a new extent list with the same element count.
    /// The buffer is untouched; only the shape changes.
    DenseTensor reshaped(std::vector<Index> new_shape) const;

    /// Vectorization: reshape to a single axis.
    Eigen::VectorXd vec() const;

private:
    std::vector<Index> shape_;
    std::vector<double> data_;
};

/// Matrix product operator: a chain of 4th-order cores with shapes
/// (R_d, I_d, J_d, R_{d+1}). Boundary ranks are 1 on both ends and adjacent
/// cores must agree on the shared bond dimension.
struct MpoCore {
    Index left_rank;
    Index row_extent;
    Index col_extent;
    Index right_rank;
    /// Entries linearized first-index-fastest over (r, i, j, r').
    std::vector<double> values;

    double at(Index r, Index i, Index j, Index rp) const;
};

class Mpo {
public:
    explicit Mpo(std::vector<MpoCore> cores);

    const std::vector<MpoCore>& cores() const { return cores_; }
    Index order() const { return static_cast<Index>(cores_.size()); }

private:
    std::vector<MpoCore> cores_;
};

/// Number of elements implied by an extent list (with overflow guard).
Index element_count(const std::vector<Index>& shape);

/// 1-based linear index of the 1-based multi-index `indices` in the index
/// box `extents`: i_1 + sum_{d>=2} (i_d - 1) * prod_{m<d} I_m.
Index multi_index(const std::vector<Index>& indices, const std::vector<Index>& extents);

/// Inverse of multi_index: decode 1-based linear index into 1-based indices.
std::vector<Index> multi_index_decode(Index linear, const std::vector<Index>& extents);

/// Kronecker product of two vectors. The second factor's index varies
/// fastest, so kron(a, b) = (a_1*b, a_2*b, ...), matching the project
/// linearization when the output is read as a tensor over (len(b), len(a)).
Eigen::VectorXd kron(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Row-wise Khatri-Rao product: row n of the result is kron(A.row(n), B.row(n)).
Eigen::MatrixXd khatri_rao_rowwise(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Entry ([i_1..i_D], [j_1..j_D]) of the matrix an MPO represents, computed
/// by chaining the core contractions left to right. Indices are 1-based.
double mpo_entry(const Mpo& mpo, const std::vector<Index>& row_indices,
                 const std::vector<Index>& col_indices);

/// Symmetry defect of a cubic tensor: the sum over all D! index permutations
/// of the Frobenius distance between the tensor and its permuted copy.
/// Zero exactly when the tensor is symmetric. Requires equal extents and
/// order at most 8 (the permutation count is factorial in the order).
double symmetry_metric(const DenseTensor& t);

/// Average of a cubic tensor over all index permutations (the projection
/// onto symmetric tensors). Test helper for symmetry properties.
DenseTensor symmetrize(const DenseTensor& t);

}  // namespace voltcast::tensor
