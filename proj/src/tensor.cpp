#include "voltcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace voltcast::tensor {

namespace {

constexpr Index kMaxFactorialOrder = 8;

void check_extents(const std::vector<Index>& extents) {
    if (extents.empty()) {
        throw std::invalid_argument("extent list must be nonempty");
    }
    for (Index e : extents) {
        if (e < 1) {
            throw std::invalid_argument("extents must be positive, got " + std::to_string(e));
        }
    }
}

}  // namespace

Index element_count(const std::vector<Index>& shape) {
    check_extents(shape);
    Index count = 1;
    for (Index e : shape) {
        if (count > std::numeric_limits<Index>::max() / e) {
            throw std::overflow_error("element count overflows");
        }
        count *= e;
    }
    return count;
}

Index multi_index(const std::vector<Index>& indices, const std::vector<Index>& extents) {
    if (indices.size() != extents.size()) {
        throw std::invalid_argument("multi_index: index/extent length mismatch");
    }
    check_extents(extents);
    Index linear = 0;
    Index stride = 1;
    for (std::size_t d = 0; d < indices.size(); ++d) {
        if (indices[d] < 1 || indices[d] > extents[d]) {
            throw std::out_of_range("multi_index: index " + std::to_string(indices[d]) +
                                    " out of range [1, " + std::to_string(extents[d]) + "]");
        }
        linear += (indices[d] - 1) * stride;
        stride *= extents[d];
    }
    return linear + 1;
}

std::vector<Index> multi_index_decode(Index linear, const std::vector<Index>& extents) {
    const Index total = element_count(extents);
    if (linear < 1 || linear > total) {
        throw std::out_of_range("multi_index_decode: linear index out of range");
    }
    std::vector<Index> indices(extents.size());
    Index rest = linear - 1;
    for (std::size_t d = 0; d < extents.size(); ++d) {
        indices[d] = rest % extents[d] + 1;
        rest /= extents[d];
    }
    return indices;
}

DenseTensor::DenseTensor(std::vector<Index> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    const Index expected = element_count(shape_);
    if (expected != static_cast<Index>(data_.size())) {
        throw std::invalid_argument("DenseTensor: buffer length " + std::to_string(data_.size()) +
                                    " does not match shape product " + std::to_string(expected));
    }
}

DenseTensor::DenseTensor(std::vector<Index> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(element_count(shape_)), 0.0) {}

double DenseTensor::at(const std::vector<Index>& indices) const {
    return data_[static_cast<std::size_t>(multi_index(indices, shape_) - 1)];
}

double& DenseTensor::at(const std::vector<Index>& indices) {
    return data_[static_cast<std::size_t>(multi_index(indices, shape_) - 1)];
}

DenseTensor DenseTensor::reshaped(std::vector<Index> new_shape) const {
    const Index count = element_count(new_shape);
    if (count != size()) {
        throw std::invalid_argument("reshape: element count mismatch (" + std::to_string(size()) +
                                    " vs " + std::to_string(count) + ")");
    }
    return DenseTensor(std::move(new_shape), data_);
}

Eigen::VectorXd DenseTensor::vec() const {
    return Eigen::Map<const Eigen::VectorXd>(data_.data(), static_cast<Eigen::Index>(data_.size()));
}

double MpoCore::at(Index r, Index i, Index j, Index rp) const {
    const Index linear = multi_index({r, i, j, rp}, {left_rank, row_extent, col_extent, right_rank});
    return values[static_cast<std::size_t>(linear - 1)];
}

Mpo::Mpo(std::vector<MpoCore> cores) : cores_(std::move(cores)) {
    if (cores_.empty()) {
        throw std::invalid_argument("Mpo: core list must be nonempty");
    }
    for (const MpoCore& core : cores_) {
        const Index expected =
            element_count({core.left_rank, core.row_extent, core.col_extent, core.right_rank});
        if (expected != static_cast<Index>(core.values.size())) {
            throw std::invalid_argument("Mpo: core buffer does not match its shape");
        }
    }
    if (cores_.front().left_rank != 1 || cores_.back().right_rank != 1) {
        throw std::invalid_argument("Mpo: boundary ranks must be 1");
    }
    for (std::size_t d = 0; d + 1 < cores_.size(); ++d) {
        if (cores_[d].right_rank != cores_[d + 1].left_rank) {
            throw std::invalid_argument("Mpo: bond dimension mismatch between cores " +
                                        std::to_string(d) + " and " + std::to_string(d + 1));
        }
    }
}

Eigen::VectorXd kron(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() == 0 || b.size() == 0) {
        throw std::invalid_argument("kron: inputs must be nonempty");
    }
    Eigen::VectorXd out(a.size() * b.size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        out.segment(i * b.size(), b.size()) = a(i) * b;
    }
    return out;
}

Eigen::MatrixXd khatri_rao_rowwise(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("khatri_rao_rowwise: row-count mismatch (" +
                                    std::to_string(a.rows()) + " vs " + std::to_string(b.rows()) + ")");
    }
    if (a.cols() == 0 || b.cols() == 0) {
        throw std::invalid_argument("khatri_rao_rowwise: inputs must be nonempty");
    }
    Eigen::MatrixXd out(a.rows(), a.cols() * b.cols());
    for (Eigen::Index n = 0; n < a.rows(); ++n) {
        for (Eigen::Index i = 0; i < a.cols(); ++i) {
            out.row(n).segment(i * b.cols(), b.cols()) = a(n, i) * b.row(n);
        }
    }
    return out;
}

double mpo_entry(const Mpo& mpo, const std::vector<Index>& row_indices,
                 const std::vector<Index>& col_indices) {
    const Index order = mpo.order();
    if (static_cast<Index>(row_indices.size()) != order ||
        static_cast<Index>(col_indices.size()) != order) {
        throw std::invalid_argument("mpo_entry: index lists must match the core count");
    }
    // Left-to-right contraction: carry the row vector of partial sums over
    // the open bond index.
    Eigen::RowVectorXd carry = Eigen::RowVectorXd::Ones(1);
    for (Index d = 0; d < order; ++d) {
        const MpoCore& core = mpo.cores()[static_cast<std::size_t>(d)];
        const Index i = row_indices[static_cast<std::size_t>(d)];
        const Index j = col_indices[static_cast<std::size_t>(d)];
        if (i < 1 || i > core.row_extent || j < 1 || j > core.col_extent) {
            throw std::out_of_range("mpo_entry: index out of range at core " + std::to_string(d));
        }
        Eigen::RowVectorXd next = Eigen::RowVectorXd::Zero(core.right_rank);
        for (Index rp = 1; rp <= core.right_rank; ++rp) {
            double sum = 0.0;
            for (Index r = 1; r <= core.left_rank; ++r) {
                sum += carry(r - 1) * core.at(r, i, j, rp);
            }
            next(rp - 1) = sum;
        }
        carry = std::move(next);
    }
    return carry(0);
}

namespace {

std::vector<std::vector<Index>> cubic_permutations(Index order) {
    std::vector<Index> perm(static_cast<std::size_t>(order));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::vector<std::vector<Index>> all;
    do {
        all.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return all;
}

void check_cubic(const DenseTensor& t) {
    const auto& shape = t.shape();
    for (Index e : shape) {
        if (e != shape[0]) {
            throw std::invalid_argument("symmetry metric requires equal extents");
        }
    }
    if (t.order() > kMaxFactorialOrder) {
        throw std::invalid_argument("symmetry metric limited to order <= 8");
    }
}

}  // namespace

double symmetry_metric(const DenseTensor& t) {
    check_cubic(t);
    const auto& shape = t.shape();
    const Index total = t.size();
    const auto perms = cubic_permutations(t.order());

    double metric = 0.0;
    std::vector<Index> permuted(static_cast<std::size_t>(t.order()));
    for (const auto& perm : perms) {
        double sq = 0.0;
        for (Index linear = 1; linear <= total; ++linear) {
            const auto idx = multi_index_decode(linear, shape);
            for (std::size_t d = 0; d < perm.size(); ++d) {
                permuted[d] = idx[static_cast<std::size_t>(perm[d])];
            }
            const double diff = t.data()[static_cast<std::size_t>(linear - 1)] -
                                t.data()[static_cast<std::size_t>(multi_index(permuted, shape) - 1)];
            sq += diff * diff;
        }
        metric += std::sqrt(sq);
    }
    return metric;
}

DenseTensor symmetrize(const DenseTensor& t) {
    check_cubic(t);
    const auto& shape = t.shape();
    const Index total = t.size();
    const auto perms = cubic_permutations(t.order());

    DenseTensor out(shape);
    std::vector<Index> permuted(static_cast<std::size_t>(t.order()));
    for (Index linear = 1; linear <= total; ++linear) {
        const auto idx = multi_index_decode(linear, shape);
        double sum = 0.0;
        for (const auto& perm : perms) {
            for (std::size_t d = 0; d < perm.size(); ++d) {
                permuted[d] = idx[static_cast<std::size_t>(perm[d])];
            }
            sum += t.data()[static_cast<std::size_t>(multi_index(permuted, shape) - 1)];
        }
        out.data()[static_cast<std::size_t>(linear - 1)] = sum / static_cast<double>(perms.size());
    }
    return out;
}

}  // namespace voltcast::tensor
