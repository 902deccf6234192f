#ifndef COPB_H
#define COPB_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CopbStatus {
  COPB_STATUS_OK = 0,
  COPB_STATUS_NULL_POINTER = 1,
  COPB_STATUS_INVALID_ARGUMENT = 2,
  COPB_STATUS_IO = 3,
  COPB_STATUS_PARSE = 4,
  COPB_STATUS_COMPUTE = 5,
  COPB_STATUS_PANIC = 6,
} CopbStatus;

/**
 * Opaque spatial index over a POI table.
 */
typedef struct CopbPoiIndex CopbPoiIndex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next call.
 */
const char *copb_last_error(void);

/**
 * Library version as a static string.
 */
const char *copb_version(void);

/**
 * Great-circle distance in km.
 */
enum CopbStatus copb_haversine_km(double lat1,
                                  double lon1,
                                  double lat2,
                                  double lon2,
                                  double *out_km);

/**
 * Parses `"(HH:MM, HH:MM)"` into minutes after midnight.
 */
enum CopbStatus copb_parse_time_window(const char *text, uint16_t *out_start, uint16_t *out_end);

/**
 * Jensen-Shannon divergence (base 2) of two equal-length distributions.
 */
enum CopbStatus copb_jsd(const double *p, const double *q, size_t len, double *out_value);

/**
 * Loads an `id,name,category,lat,lon` CSV into a new index.
 */
enum CopbStatus copb_poi_index_load(const char *path,
                                    double cell_km,
                                    struct CopbPoiIndex **out_index);

/**
 * Frees an index; null is ignored.
 */
void copb_poi_index_free(struct CopbPoiIndex *index);

enum CopbStatus copb_poi_index_len(const struct CopbPoiIndex *index, size_t *out_len);

/**
 * Number of POIs within `radius_km` of a point.
 */
enum CopbStatus copb_poi_index_count_within(const struct CopbPoiIndex *index,
                                            double lat,
                                            double lon,
                                            double radius_km,
                                            size_t *out_count);

/**
 * Draws `n` indices proportional to `weights`, deterministically for a given seed.
 */
enum CopbStatus copb_sample_weighted(const double *weights,
                                     size_t len,
                                     uint64_t seed,
                                     size_t n,
                                     size_t *out_indices);

/**
 * Fits the distance-decay exponent to displacements in `(min_km, max_km]`.
 */
enum CopbStatus copb_fit_decay_exponent(const double *displacements_km,
                                        size_t len,
                                        double min_km,
                                        double max_km,
                                        double *out_exponent,
                                        double *out_stderr);

/**
 * Evaluates two JSON Lines corpora and returns the report as a JSON string, freed with
 * [`copb_string_free`].
 */
enum CopbStatus copb_evaluate_files(const char *generated,
                                    const char *reference,
                                    double cell_km,
                                    char **out_json);

/**
 * Frees a string returned by this library; null is ignored.
 */
void copb_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COPB_H */
