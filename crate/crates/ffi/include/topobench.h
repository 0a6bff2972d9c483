#ifndef TOPOBENCH_H
#define TOPOBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TbStatus {
  TB_STATUS_OK = 0,
  TB_STATUS_NULL_POINTER = 1,
  TB_STATUS_INVALID_UTF8 = 2,
  TB_STATUS_INVALID_INPUT = 3,
  TB_STATUS_GENERATION_FAILED = 4,
  TB_STATUS_IO = 5,
  TB_STATUS_PANIC = 6,
} TbStatus;

typedef enum TbColorMode {
  TB_COLOR_MODE_GREY = 0,
  TB_COLOR_MODE_RGB = 1,
} TbColorMode;

typedef struct TbGraph TbGraph;

typedef struct TbImage TbImage;

typedef struct TbPlan TbPlan;

typedef struct TbReport TbReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Owned by the library.
 */
const char *tb_last_error(void);

/**
 * Library version as a static string.
 */
const char *tb_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void tb_string_free(char *s);

/**
 * The bundled 12-room case-house graph.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum TbStatus tb_graph_case_house(struct TbGraph **out);

/**
 * Parses and validates a graph from JSON.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` valid for writing a pointer.
 */
enum TbStatus tb_graph_from_json(const char *json, struct TbGraph **out);

/**
 * # Safety
 * `graph` must be null or a handle from this library, not yet freed.
 */
void tb_graph_free(struct TbGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle; the output pointers must be valid for writing.
 */
enum TbStatus tb_graph_counts(const struct TbGraph *graph, size_t *rooms, size_t *edges);

/**
 * Grey-level pair counts as a JSON object such as `{"1-3":1,"2-3":2}`.
 *
 * # Safety
 * `graph` must be a live handle and `out` valid for writing a pointer.
 */
enum TbStatus tb_graph_grey_profile_json(const struct TbGraph *graph, char **out);

/**
 * Generates one qualified plan on a bundled boundary (`rect`, `notch_corner`,
 * `notch_side`). Zero `density` or `max_adjacency_distance` selects the default.
 *
 * # Safety
 * `graph` must be a live handle, `boundary` a nul-terminated string and `out` valid for
 * writing a pointer.
 */
enum TbStatus tb_generate_plan(const struct TbGraph *graph,
                               const char *boundary,
                               uint32_t density,
                               uint32_t max_adjacency_distance,
                               uint64_t seed,
                               struct TbPlan **out);

/**
 * # Safety
 * `json` must be a nul-terminated string and `out` valid for writing a pointer.
 */
enum TbStatus tb_plan_from_json(const char *json, struct TbPlan **out);

/**
 * # Safety
 * `plan` must be a live handle and `out` valid for writing a pointer.
 */
enum TbStatus tb_plan_to_json(const struct TbPlan *plan, char **out);

/**
 * # Safety
 * `plan` must be null or a handle from this library, not yet freed.
 */
void tb_plan_free(struct TbPlan *plan);

/**
 * Writes 1 to `qualified` if the plan passes the recheck rules, else 0. The reasons are
 * written as JSON to `reasons_json` when it is not null.
 *
 * # Safety
 * `plan` and `graph` must be live handles and `qualified` valid for writing.
 */
enum TbStatus tb_plan_qualify(const struct TbPlan *plan,
                              const struct TbGraph *graph,
                              int32_t *qualified,
                              char **reasons_json);

/**
 * Renders the plan with the bundled palette for `mode`. Zero `scale` means 4.
 *
 * # Safety
 * `plan` and `graph` must be live handles and `out` valid for writing a pointer.
 */
enum TbStatus tb_render_target(const struct TbPlan *plan,
                               const struct TbGraph *graph,
                               enum TbColorMode mode,
                               size_t scale,
                               struct TbImage **out);

/**
 * Degraded copy of `image`; `level` 0 returns an identical image.
 *
 * # Safety
 * `image` must be a live handle and `out` valid for writing a pointer.
 */
enum TbStatus tb_image_degrade(const struct TbImage *image,
                               double level,
                               uint64_t stream,
                               struct TbImage **out);

/**
 * # Safety
 * `path` must be a nul-terminated string and `out` valid for writing a pointer.
 */
enum TbStatus tb_image_read_png(const char *path, struct TbImage **out);

/**
 * # Safety
 * `image` must be a live handle and `path` a nul-terminated string.
 */
enum TbStatus tb_image_write_png(const struct TbImage *image, const char *path);

/**
 * # Safety
 * `image` must be a live handle; the output pointers must be valid for writing.
 */
enum TbStatus tb_image_size(const struct TbImage *image, size_t *width, size_t *height);

/**
 * # Safety
 * `image` must be null or a handle from this library, not yet freed.
 */
void tb_image_free(struct TbImage *image);

/**
 * Adjacency report for one image with the default extraction parameters and the bundled
 * palette for `mode`.
 *
 * # Safety
 * `image` and `graph` must be live handles, `image_id` null or a nul-terminated string,
 * and `out` valid for writing a pointer.
 */
enum TbStatus tb_extract(const struct TbImage *image,
                         const struct TbGraph *graph,
                         enum TbColorMode mode,
                         const char *image_id,
                         struct TbReport **out);

/**
 * # Safety
 * `report` must be a live handle; the output pointers must be valid for writing.
 */
enum TbStatus tb_report_counts(const struct TbReport *report,
                               size_t *core_found,
                               size_t *core_total,
                               size_t *total_adjacencies);

/**
 * # Safety
 * `report` must be a live handle and `out` valid for writing a pointer.
 */
enum TbStatus tb_report_to_json(const struct TbReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a handle from this library, not yet freed.
 */
void tb_report_free(struct TbReport *report);

/**
 * Generator and discriminator totals of one loss record.
 *
 * # Safety
 * The output pointers must be valid for writing.
 */
enum TbStatus tb_total_losses(double g_gan,
                              double g_l1,
                              double d_real,
                              double d_fake,
                              double lambda_l1,
                              double *generator_total,
                              double *discriminator_total);

/**
 * Parses a pix2pix loss log and returns its records as a JSON array.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` valid for writing a pointer.
 */
enum TbStatus tb_parse_loss_log_json(const char *text, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPOBENCH_H */
