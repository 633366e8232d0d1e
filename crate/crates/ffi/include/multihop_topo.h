#ifndef MULTIHOP_TOPO_H
#define MULTIHOP_TOPO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum MtStatus {
  MT_STATUS_OK = 0,
  MT_STATUS_NULL_POINTER = 1,
  MT_STATUS_INVALID_ARGUMENT = 2,
  MT_STATUS_PARSE = 3,
  MT_STATUS_SOLVER = 4,
  MT_STATUS_NOT_FOUND = 5,
  MT_STATUS_BUFFER_TOO_SMALL = 6,
  MT_STATUS_PANIC = 99,
} MtStatus;

// A loss matrix.
typedef struct MtMatrix MtMatrix;

// A constant-degree selection.
typedef struct MtSelection MtSelection;

// A layered tree.
typedef struct MtTree MtTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *mt_last_error(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not be freed twice.
void mt_string_free(char *s);

// Parses a loss matrix from its JSON form.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be writable.
enum MtStatus mt_matrix_from_json(const char *json, struct MtMatrix **out);

// Serializes a matrix to JSON; release the result with [`mt_string_free`].
//
// # Safety
// `matrix` must be a live handle; `out` must be writable.
enum MtStatus mt_matrix_to_json(const struct MtMatrix *matrix, char **out);

// Number of nodes in the matrix, 0 for a null handle.
//
// # Safety
// `matrix` must be null or a live handle.
size_t mt_matrix_node_count(const struct MtMatrix *matrix);

// Mean loss from `tx` to `rx` in dB.
//
// # Safety
// `matrix` must be a live handle; `loss` must be writable.
enum MtStatus mt_matrix_loss(const struct MtMatrix *matrix, uint32_t tx, uint32_t rx, double *loss);

// # Safety
// `matrix` must be null or a handle not yet freed.
void mt_matrix_free(struct MtMatrix *matrix);

// Best constant-degree selection over the sweep `beta_min..=beta_max`:
// the largest connected c-regular induced component.
//
// # Safety
// `matrix` must be a live handle; `out` must be writable.
enum MtStatus mt_degree_select(const struct MtMatrix *matrix,
                               size_t c,
                               double beta_min,
                               double beta_max,
                               double beta_step,
                               struct MtSelection **out);

// # Safety
// `sel` must be null or a live handle.
double mt_selection_beta(const struct MtSelection *sel);

// # Safety
// `sel` must be null or a live handle.
size_t mt_selection_size(const struct MtSelection *sel);

// Copies the selected node ids, ascending, into `buf`.
//
// # Safety
// `sel` must be a live handle; `buf` must hold `cap` ids; `len` writable.
enum MtStatus mt_selection_nodes(const struct MtSelection *sel,
                                 uint32_t *buf,
                                 size_t cap,
                                 size_t *len);

// # Safety
// `sel` must be null or a handle not yet freed.
void mt_selection_free(struct MtSelection *sel);

// Grows one layered tree from `root` at budget `beta`.
//
// # Safety
// `matrix` must be a live handle; `kappa` a nul-terminated string such as
// `"linear"` or `"const:2"`; `out` writable.
enum MtStatus mt_tree_build(const struct MtMatrix *matrix,
                            uint32_t root,
                            double beta,
                            double margin,
                            const char *kappa,
                            struct MtTree **out);

// Deepest tree over all roots and the sweep `beta_min..=beta_max`.
//
// # Safety
// As for [`mt_tree_build`].
enum MtStatus mt_tree_sweep_best(const struct MtMatrix *matrix,
                                 double beta_min,
                                 double beta_max,
                                 double beta_step,
                                 double margin,
                                 const char *kappa,
                                 struct MtTree **out);

// Minimal-node version of `tree`, written to `out` as a new handle.
//
// # Safety
// `tree` and `matrix` must be live handles; `kappa` nul-terminated; `out`
// writable.
enum MtStatus mt_tree_reduce(const struct MtTree *tree,
                             const struct MtMatrix *matrix,
                             const char *kappa,
                             struct MtTree **out);

// Checks the tree against `fresh`; `passed` is set to 1 or 0. The violation
// list is available through [`mt_last_error`] when the check fails.
//
// # Safety
// `tree` and `fresh` must be live handles; `kappa` nul-terminated; `passed`
// writable.
enum MtStatus mt_tree_verify(const struct MtTree *tree,
                             const struct MtMatrix *fresh,
                             const char *kappa,
                             int32_t *passed);

// # Safety
// `tree` must be null or a live handle.
size_t mt_tree_depth(const struct MtTree *tree);

// # Safety
// `tree` must be null or a live handle.
size_t mt_tree_node_count(const struct MtTree *tree);

// # Safety
// `tree` must be null or a live handle.
uint32_t mt_tree_root(const struct MtTree *tree);

// # Safety
// `tree` must be null or a live handle.
double mt_tree_beta(const struct MtTree *tree);

// Copies the ids of one level, ascending, into `buf`.
//
// # Safety
// `tree` must be a live handle; `buf` must hold `cap` ids; `len` writable.
enum MtStatus mt_tree_level(const struct MtTree *tree,
                            size_t level,
                            uint32_t *buf,
                            size_t cap,
                            size_t *len);

// # Safety
// `tree` must be null or a handle not yet freed.
void mt_tree_free(struct MtTree *tree);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTIHOP_TOPO_H */
