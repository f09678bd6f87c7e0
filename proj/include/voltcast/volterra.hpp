#pragma once

#include "voltcast/tensor.hpp"

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace voltcast::volterra {

using Index = tensor::Index;

/// Hyperparameters of a truncated Volterra regression.
///
/// The extended input length is I = P*M + 1 and the number of independent
/// monomial coefficients is R = C(P*M + D, P*M).
struct VolterraConfig {
    Index max_delay = 1;       ///< M, number of past inputs per feature row
    Index max_degree = 2;      ///< D, maximum monomial degree
    Index input_dim = 1;       ///< P
    Index output_dim = 1;      ///< L
    /// Relative singular-value cutoff for the least-squares solve.
    /// Unset means the default 1e-10 * sqrt(Ntrain), picked at fit time.
    std::optional<double> svd_tolerance;

    Index extended_dim() const { return input_dim * max_delay + 1; }
    Index coefficient_count() const;  ///< R

    void validate() const;
    double resolve_svd_tolerance(Index n_train) const;
};

/// Unique monomials of degree D over the extended input slots {1..I}:
/// non-decreasing index tuples in lexicographic order, together with the
/// number of distinct orderings of each tuple (the multinomial multiplicity).
struct MonomialBasis {
    Index extended_dim = 0;  ///< I
    Index degree = 0;        ///< D
    std::vector<std::vector<Index>> entries;
    std::vector<std::uint64_t> multiplicities;

    Index size() const { return static_cast<Index>(entries.size()); }
};

/// Binomial coefficient with overflow guard (throws std::overflow_error).
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

/// Enumerate the monomial basis for extended dimension I and degree D.
MonomialBasis enumerate_monomials(Index extended_dim, Index degree);

/// Trained truncated Volterra model in the compressed monomial basis.
/// `coefficients` is R x L: one unique coefficient per monomial per output
/// channel. Predictions weight each monomial by its multiplicity, which is
/// exactly the dot product against the expanded symmetric coefficient matrix.
struct VolterraModel {
    VolterraConfig config;
    MonomialBasis basis;
    Eigen::MatrixXd coefficients;

    /// Metadata carried into serialized model files.
    std::string trained_on;
    std::uint64_t seed = 0;
    Index n_train = 0;
};

/// Full-matrix construction guard, in elements.
inline constexpr Index kDefaultElementBudget = 100'000'000;

/// Extended input (1, u(n)^T, u(n-1)^T, ..., u(n-M+1)^T) for 1-based time
/// index n over the rows of `series`. Requires n >= M.
Eigen::VectorXd build_extended_input(const Eigen::MatrixXd& series, Index n, Index max_delay);

/// Full feature matrix with I^D columns; one row per n in [M, N].
/// Row n is the D-fold Kronecker power of the extended input at n.
/// Throws when the element count exceeds `element_budget`.
Eigen::MatrixXd build_feature_matrix_full(const Eigen::MatrixXd& series, const VolterraConfig& config,
                                          Index element_budget = kDefaultElementBudget);

/// Same matrix built by repeated row-wise Khatri-Rao products of the
/// extended-input matrix. Used as an independent construction in tests.
Eigen::MatrixXd build_feature_matrix_khatri_rao(const Eigen::MatrixXd& series,
                                                const VolterraConfig& config,
                                                Index element_budget = kDefaultElementBudget);

/// Compressed feature matrix with one column per unique monomial:
/// Uc(n, j) = prod_d u_n(basis_j(d)).
Eigen::MatrixXd build_feature_matrix_compressed(const Eigen::MatrixXd& series,
                                                const VolterraConfig& config,
                                                const MonomialBasis& basis);

/// Result of the brute-force least-squares solve, kept around for
/// diagnostics: the uncompressed coefficient matrix and the singular-value
/// profile of the full feature matrix.
struct NaiveFit {
    VolterraModel model;
    Eigen::MatrixXd full_coefficients;  ///< I^D x L
    Eigen::VectorXd singular_values;    ///< singular values of the full U
};

/// Brute-force solver: build the full I^D-column feature matrix and compute
/// the minimal-norm least-squares solution through a truncated SVD. This is
/// the reference implementation the compressed solver is checked against.
NaiveFit fit_naive_detailed(const Eigen::MatrixXd& series, const Eigen::MatrixXd& targets,
                            const VolterraConfig& config,
                            Index element_budget = kDefaultElementBudget);

VolterraModel fit_naive(const Eigen::MatrixXd& series, const Eigen::MatrixXd& targets,
                        const VolterraConfig& config,
                        Index element_budget = kDefaultElementBudget);

/// Production solver. Exploits the symmetry of the minimal-norm solution:
/// with W = Uc * diag(sqrt(c)) and thin SVD W = Q1 S V1^T.
///   w = V1 S^-1 Q1^T Y,   h = diag(1/sqrt(c)) w.
/// The expanded coefficients equal the minimal-norm solution of the full
/// problem without ever forming the I^D-column matrix.
VolterraModel fit_symmetric(const Eigen::MatrixXd& series, const Eigen::MatrixXd& targets,
                            const VolterraConfig& config);

/// Relative training residual ||U H - Y||_F / ||Y||_F (zero targets give 0).
double training_residual(const VolterraModel& model, const Eigen::MatrixXd& series,
                         const Eigen::MatrixXd& targets);

/// Scatter the compressed coefficients to the full I^D x L matrix; each
/// column is the vectorization of a symmetric order-D tensor by construction.
Eigen::MatrixXd expand_full(const VolterraModel& model, Index element_budget = kDefaultElementBudget);

/// Gather a full coefficient matrix into the compressed basis by averaging
/// each permutation orbit. Exact inverse of expand_full for symmetric input,
/// and prediction-preserving for any input.
Eigen::MatrixXd compress_full(const Eigen::MatrixXd& full, const VolterraConfig& config,
                              const MonomialBasis& basis);

/// One-step prediction at 1-based time n of `series`.
Eigen::VectorXd predict_open_loop(const VolterraModel& model, const Eigen::MatrixXd& series, Index n);

/// Autonomous rollout: `warmup` holds at least the last M observed states
/// (rows, oldest first); each prediction is fed back as the next input.
/// Requires L == P. Returns a steps x P trajectory.
Eigen::MatrixXd predict_closed_loop(const VolterraModel& model, const Eigen::MatrixXd& warmup,
                                    Index steps);

/// JSON (de)serialization of trained models. The basis is regenerated from
/// the config on load.
nlohmann::json to_json(const VolterraModel& model);
VolterraModel model_from_json(const nlohmann::json& j);

}  // namespace voltcast::volterra
