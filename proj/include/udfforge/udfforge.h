/* C interface to the udfforge library. Every function returns a status code;
 * on failure udf_last_error() describes the problem for the calling thread.
 * Objects are opaque handles released with their matching *_free function. */
#ifndef UDFFORGE_UDFFORGE_H
#define UDFFORGE_UDFFORGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(UDFFORGE_BUILDING_LIBRARY)
#define UDF_API __attribute__((visibility("default")))
#else
#define UDF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum udf_status {
  UDF_OK = 0,
  UDF_ERR_INVALID_ARGUMENT = 1,
  UDF_ERR_IO = 2,
  UDF_ERR_PARSE = 3,
  UDF_ERR_CONFIG = 4,
  UDF_ERR_RUNTIME = 5,
  UDF_ERR_INTERNAL = 6
} udf_status;

typedef struct udf_config udf_config;
typedef struct udf_cloud udf_cloud;
typedef struct udf_field udf_field;

UDF_API const char* udf_version(void);
/* Message of the last failed call on this thread; empty after a success. */
UDF_API const char* udf_last_error(void);
UDF_API const char* udf_status_name(udf_status status);

/* Release strings returned through char** out-parameters. */
UDF_API void udf_string_free(char* s);

/* ---- Run configuration ------------------------------------------------ */

UDF_API udf_status udf_config_default(udf_config** out);
/* `source` names the text in error messages (for example a file path). */
UDF_API udf_status udf_config_parse(const char* json_text, const char* source, udf_config** out);
UDF_API udf_status udf_config_load(const char* path, udf_config** out);
/* Sets a dotted key such as "train.total_iters" from JSON text; text that is
 * not valid JSON is taken as a string. */
UDF_API udf_status udf_config_set(udf_config* config, const char* dotted_key, const char* value);
UDF_API udf_status udf_config_to_json(const udf_config* config, char** out_json);
UDF_API void udf_config_free(udf_config* config);

/* ---- Commands (write into paths.out_dir) ------------------------------- */

typedef void (*udf_record_fn)(const char* record_json, void* user);

UDF_API udf_status udf_cmd_synth(const udf_config* config);
/* `resume_path` may be NULL. `on_record` receives every metric record as a
 * JSON line and may be NULL. */
UDF_API udf_status udf_cmd_train(const udf_config* config, const char* resume_path, udf_record_fn on_record,
                                 void* user);
UDF_API udf_status udf_cmd_extract(const udf_config* config, char** out_summary_json);
UDF_API udf_status udf_cmd_deform(const udf_config* config, char** out_summary_json);
/* `out_table` receives the fixed-order text table; may be NULL. */
UDF_API udf_status udf_cmd_eval(const udf_config* config, char** out_report_json, char** out_table);
UDF_API udf_status udf_cmd_export_field(const udf_config* config);

/* ---- Surfel clouds ----------------------------------------------------- */

UDF_API udf_status udf_cloud_load(const char* path, udf_cloud** out);
UDF_API udf_status udf_cloud_save(const udf_cloud* cloud, const char* path, int binary);
UDF_API size_t udf_cloud_size(const udf_cloud* cloud);
UDF_API udf_status udf_cloud_center(const udf_cloud* cloud, size_t index, double out_xyz[3]);
UDF_API void udf_cloud_free(udf_cloud* cloud);

/* ---- Fields ------------------------------------------------------------ */

UDF_API udf_status udf_field_load(const char* path, udf_field** out);
UDF_API udf_status udf_field_save(const udf_field* field, const char* path);
/* `xyz` holds n packed points; `values` receives n distances. */
UDF_API udf_status udf_field_eval(const udf_field* field, const double* xyz, size_t n, double* values);
/* `grads` receives n packed gradients. */
UDF_API udf_status udf_field_eval_with_grad(const udf_field* field, const double* xyz, size_t n, double* values,
                                            double* grads);
UDF_API void udf_field_free(udf_field* field);

/* Caps worker threads for every later call. */
UDF_API void udf_set_threads(int threads);

#ifdef __cplusplus
}
#endif

#endif /* UDFFORGE_UDFFORGE_H */
