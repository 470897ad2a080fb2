#include <stdio.h>
#include <string.h>

#include "encore.h"

#define CHECK(expr)                                                        \
    do {                                                                   \
        EncoreStatus s_ = (expr);                                          \
        if (s_ != ENCORE_STATUS_OK) {                                      \
            const char *m_ = encore_last_error();                          \
            fprintf(stderr, "%s: status %d (%s)\n", #expr, (int)s_,        \
                    m_ ? m_ : "no message");                               \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    static const char corpus[] =
        "a small corpus for a small model, read one byte at a time.";
    static const uint8_t key[] = {1, 2, 3, 4, 5, 6, 7, 8};
    static const uint8_t nonce[] = {42};
    size_t len = sizeof corpus - 1;

    EncoreModel *model = NULL;
    CHECK(encore_model_train((const uint8_t *)corpus, len, 1, 0.5,
                             ENCORE_BUILDER_GREEDY, &model));

    EncoreEncodeParams params;
    CHECK(encore_encode_params_default(&params));
    params.cipher_id = 1;
    params.key = key;
    params.key_len = sizeof key;
    params.nonce = nonce;
    params.nonce_len = sizeof nonce;
    params.frame_size = 16;

    EncoreBuffer *container = NULL;
    CHECK(encore_encode_bytes(model, &params, (const uint8_t *)corpus, len,
                              &container));

    size_t frames = 0;
    uint64_t symbols = 0;
    CHECK(encore_container_info(encore_buffer_data(container),
                                encore_buffer_len(container), &frames,
                                &symbols));

    EncoreBuffer *plain = NULL;
    CHECK(encore_decode_bytes(model, key, sizeof key,
                              encore_buffer_data(container),
                              encore_buffer_len(container), &plain));
    if (encore_buffer_len(plain) != len ||
        memcmp(encore_buffer_data(plain), corpus, len) != 0) {
        fprintf(stderr, "round trip mismatch\n");
        return 1;
    }

    EncoreSymbols *bad = NULL;
    EncoreStatus s = encore_decode(model, NULL, 0,
                                   encore_buffer_data(container),
                                   encore_buffer_len(container), &bad);
    if (s != ENCORE_STATUS_BAD_KEY || bad != NULL) {
        fprintf(stderr, "missing key not rejected: %d\n", (int)s);
        return 1;
    }

    printf("ok %s %zu frames %llu symbols %zu bytes\n", encore_version(),
           frames, (unsigned long long)symbols, encore_buffer_len(container));
    encore_buffer_free(plain);
    encore_buffer_free(container);
    encore_model_free(model);
    return 0;
}
