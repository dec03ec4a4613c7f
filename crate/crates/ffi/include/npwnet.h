#ifndef NPWNET_H
#define NPWNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NpwStatus {
  NpwStatus_Ok = 0,
  NpwStatus_NullPointer = 1,
  NpwStatus_InvalidArgument = 2,
  NpwStatus_Network = 3,
  NpwStatus_Fit = 4,
  NpwStatus_Io = 5,
  NpwStatus_Panic = 6,
  NpwStatus_BufferTooSmall = 7,
} NpwStatus;

typedef enum NpwWeightMode {
  NpwWeightMode_Nonparametric = 0,
  NpwWeightMode_Normal = 1,
  NpwWeightMode_Gamma = 2,
  NpwWeightMode_Binary = 3,
} NpwWeightMode;

/**
 * The outcome of [`npw_fit`].
 */
typedef struct NpwFitResult NpwFitResult;

/**
 * An undirected weighted network.
 */
typedef struct NpwNetwork NpwNetwork;

/**
 * Fit settings; obtain defaults from [`npw_fit_config_default`].
 */
typedef struct NpwFitConfig {
  size_t k;
  size_t max_iter;
  double elbo_rel_tol;
  size_t restarts;
  size_t mm_inner_iters;
  uint64_t seed;
  enum NpwWeightMode weight_mode;
  size_t density_degree;
  size_t density_grid_size;
} NpwFitConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to `len - 1` bytes. Returns the length
 * including the terminator that the full message needs.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t npw_last_error_message(char *buf, size_t len);

/**
 * Builds a network on `n` nodes from `m` edges `(i[e], j[e], w[e])`.
 *
 * # Safety
 * `i`, `j` and `w` must each point to `m` readable elements; `out` must be writable.
 */
enum NpwStatus npw_network_new(size_t n,
                               const size_t *i,
                               const size_t *j,
                               const double *w,
                               size_t m,
                               struct NpwNetwork **out);

/**
 * Reads an `i,j,w` edge list; the node count is one more than the largest index.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum NpwStatus npw_network_read_edge_list(const char *path, struct NpwNetwork **out);

/**
 * # Safety
 * `net` must be null or a handle from this library that has not been freed.
 */
void npw_network_free(struct NpwNetwork *net);

/**
 * Returns 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t npw_network_node_count(const struct NpwNetwork *net);

/**
 * Returns 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t npw_network_edge_count(const struct NpwNetwork *net);

/**
 * # Safety
 * `net` must be null or a live handle; `out` must be writable.
 */
enum NpwStatus npw_network_degree(const struct NpwNetwork *net, size_t node, size_t *out);

/**
 * Draws a planted network with the default block parameters for `weight_mode`
 * (`Nonparametric` is treated as Normal). `labels_out` receives `n` labels.
 *
 * # Safety
 * `pi` and `theta` must point to `k` readable values; `labels_out` to `n`
 * writable slots; `net_out` must be writable.
 */
enum NpwStatus npw_simulate(size_t n,
                            size_t k,
                            const double *pi,
                            const double *theta,
                            enum NpwWeightMode weight_mode,
                            uint64_t seed,
                            struct NpwNetwork **net_out,
                            size_t *labels_out);

struct NpwFitConfig npw_fit_config_default(size_t k);

/**
 * Fits the model. A fit that hits `max_iter` still succeeds; check
 * [`npw_fit_result_converged`].
 *
 * # Safety
 * `net` and `config` must be live pointers; `out` must be writable.
 */
enum NpwStatus npw_fit(const struct NpwNetwork *net,
                       const struct NpwFitConfig *config,
                       struct NpwFitResult **out);

/**
 * # Safety
 * `res` must be null or a live handle.
 */
void npw_fit_result_free(struct NpwFitResult *res);

/**
 * Number of clusters, or 0 for a null handle.
 *
 * # Safety
 * `res` must be null or a live handle.
 */
size_t npw_fit_result_k(const struct NpwFitResult *res);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `res` must be null or a live handle.
 */
size_t npw_fit_result_n(const struct NpwFitResult *res);

/**
 * # Safety
 * `res` must be null or a live handle.
 */
bool npw_fit_result_converged(const struct NpwFitResult *res);

/**
 * Length of the ELBO trace, or 0 for a null handle.
 *
 * # Safety
 * `res` must be null or a live handle.
 */
size_t npw_fit_result_elbo_trace_len(const struct NpwFitResult *res);

/**
 * Copies the `K` sparsity parameters.
 *
 * # Safety
 * `res` must be null or a live handle; `out` must point to `len` writable elements.
 */
enum NpwStatus npw_fit_result_theta(const struct NpwFitResult *res, double *out, size_t len);

/**
 * Copies the `K` cluster proportions.
 *
 * # Safety
 * `res` must be null or a live handle; `out` must point to `len` writable elements.
 */
enum NpwStatus npw_fit_result_pi(const struct NpwFitResult *res, double *out, size_t len);

/**
 * Copies the `n` hard labels.
 *
 * # Safety
 * `res` must be null or a live handle; `out` must point to `len` writable elements.
 */
enum NpwStatus npw_fit_result_labels(const struct NpwFitResult *res, size_t *out, size_t len);

/**
 * Copies the `n x K` responsibilities, row-major.
 *
 * # Safety
 * `res` must be null or a live handle; `out` must point to `len` writable elements.
 */
enum NpwStatus npw_fit_result_gamma(const struct NpwFitResult *res, double *out, size_t len);

/**
 * Copies the ELBO after each iteration, starting with the initial value.
 *
 * # Safety
 * `res` must be null or a live handle; `out` must point to `len` writable elements.
 */
enum NpwStatus npw_fit_result_elbo_trace(const struct NpwFitResult *res, double *out, size_t len);

/**
 * Writes the ICL score; fails with `InvalidArgument` when it was not computed.
 *
 * # Safety
 * `res` must be null or a live handle; `out` must be writable.
 */
enum NpwStatus npw_fit_result_icl(const struct NpwFitResult *res, double *out);

/**
 * Rand index between two labelings of `n` nodes.
 *
 * # Safety
 * `a` and `b` must point to `n` readable labels; `out` must be writable.
 */
enum NpwStatus npw_rand_index(const size_t *a, const size_t *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NPWNET_H */
