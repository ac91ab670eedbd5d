#include <stdlib.h>

static int grow(int n) {
    return n * 2;
}

char *buffer_new(size_t n) {
    return malloc(n);
}
