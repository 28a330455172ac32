#ifndef TOPOLEAK_H
#define TOPOLEAK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum TlStatus {
  TL_STATUS_OK = 0,
  TL_STATUS_NULL_POINTER = 1,
  TL_STATUS_INVALID_PARAMETER = 2,
  TL_STATUS_GENERATION_FAILED = 3,
  TL_STATUS_PARSE = 4,
  TL_STATUS_RECONSTRUCTION_INFEASIBLE = 5,
  TL_STATUS_CONSENSUS_NOT_CONVERGED = 6,
  TL_STATUS_ATTACK_FAILED = 7,
  TL_STATUS_UNDEFINED_SCORE = 8,
  TL_STATUS_CONFIG = 9,
  TL_STATUS_IO = 10,
  TL_STATUS_BUFFER_TOO_SMALL = 11,
  TL_STATUS_PANIC = 12,
} TlStatus;

typedef enum TlTopology {
  TL_TOPOLOGY_POISSON = 0,
  TL_TOPOLOGY_POWER_LAW = 1,
} TlTopology;

/**
 * Opaque graph handle.
 */
typedef struct TlGraph TlGraph;

/**
 * Opaque honest-partition handle.
 */
typedef struct TlPartition TlPartition;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next failing call on the same thread.
 */
const char *tl_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void tl_string_free(char *s);

/**
 * Generates a random graph with exactly `m` edges. `gamma` is ignored for
 * Poisson graphs. With `connected`, draws are repeated until connected.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TlStatus tl_graph_generate(enum TlTopology topology,
                                size_t n,
                                size_t m,
                                double gamma,
                                uint64_t seed,
                                bool connected,
                                struct TlGraph **out);

/**
 * Builds a graph from `n` nodes and `edge_count` pairs laid out as
 * `[i0, j0, i1, j1, ...]`.
 *
 * # Safety
 * `edges` must point to `2 * edge_count` values; `out` must be valid.
 */
enum TlStatus tl_graph_from_edges(size_t n,
                                  const size_t *edges,
                                  size_t edge_count,
                                  struct TlGraph **out);

/**
 * Parses the edge-list text format.
 *
 * # Safety
 * `text` must be a nul-terminated string; `out` must be valid.
 */
enum TlStatus tl_graph_read_edge_list(const char *text, struct TlGraph **out);

/**
 * Writes the edge-list text format. Free the result with `tl_string_free`.
 *
 * # Safety
 * `g` must be a live graph handle; `out` must be valid.
 */
enum TlStatus tl_graph_write_edge_list(const struct TlGraph *g, char **out);

/**
 * # Safety
 * `g` must be a live graph handle or null.
 */
size_t tl_graph_node_count(const struct TlGraph *g);

/**
 * # Safety
 * `g` must be a live graph handle or null.
 */
size_t tl_graph_edge_count(const struct TlGraph *g);

/**
 * # Safety
 * `g` must be a live graph handle; `out` must be valid.
 */
enum TlStatus tl_graph_degree(const struct TlGraph *g, size_t node, size_t *out);

/**
 * # Safety
 * `g` must come from this library and not be freed twice. Null is ignored.
 */
void tl_graph_free(struct TlGraph *g);

/**
 * Degree-targeted corrupt set for a fraction of the nodes. Writes the ids
 * to `buf` and the count to `out_len`; if `capacity` is too small, only
 * `out_len` is set and `BufferTooSmall` is returned.
 *
 * # Safety
 * `g` must be a live graph handle; `buf` must hold `capacity` values.
 */
enum TlStatus tl_select_corrupt(const struct TlGraph *g,
                                double fraction,
                                bool adaptive,
                                size_t *buf,
                                size_t capacity,
                                size_t *out_len);

/**
 * Honest components left after removing the `corrupt_len` corrupt nodes.
 *
 * # Safety
 * `g` must be a live graph handle, `corrupt` must hold `corrupt_len`
 * values, and `out` must be valid.
 */
enum TlStatus tl_partition_new(const struct TlGraph *g,
                               const size_t *corrupt,
                               size_t corrupt_len,
                               struct TlPartition **out);

/**
 * # Safety
 * `p` must be a live partition handle or null.
 */
size_t tl_partition_component_count(const struct TlPartition *p);

/**
 * Nodes of component `index`, ascending. Buffer protocol as in
 * `tl_select_corrupt`.
 *
 * # Safety
 * `p` must be a live partition handle; `buf` must hold `capacity` values.
 */
enum TlStatus tl_partition_component(const struct TlPartition *p,
                                     size_t index,
                                     size_t *buf,
                                     size_t capacity,
                                     size_t *out_len);

/**
 * # Safety
 * `p` must come from this library and not be freed twice. Null is ignored.
 */
void tl_partition_free(struct TlPartition *p);

/**
 * Exact leakage in nats for an honest component of size `m`; positive
 * infinity for `m = 1`.
 *
 * # Safety
 * `out` must be valid.
 */
enum TlStatus tl_mi_exact(size_t m, double *out);

/**
 * # Safety
 * `out` must be valid.
 */
enum TlStatus tl_mi_asymptotic(size_t m, double *out);

/**
 * KSG mutual-information estimate in nats between paired samples.
 *
 * # Safety
 * `x` and `y` must each hold `len` values; `out` must be valid.
 */
enum TlStatus tl_ksg_mi(const double *x, const double *y, size_t len, size_t k, double *out);

/**
 * Global SSIM of two row-major grayscale images with values in [0, 1].
 *
 * # Safety
 * `a` and `b` must each hold `width * height` values; `out` must be valid.
 */
enum TlStatus tl_ssim(const double *a, const double *b, size_t width, size_t height, double *out);

/**
 * Average consensus with Metropolis weights on `dim`-dimensional node
 * values stored row-major in `values` (`n * dim` entries), updated in
 * place. Writes the rounds used to `out_rounds`.
 *
 * # Safety
 * `g` must be a live graph handle, `values` must hold `n * dim` values and
 * `out_rounds` must be valid.
 */
enum TlStatus tl_consensus_average(const struct TlGraph *g,
                                   double *values,
                                   size_t dim,
                                   double tol,
                                   size_t max_rounds,
                                   size_t *out_rounds);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOLEAK_H */
