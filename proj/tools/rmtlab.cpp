#include <malloc.h>

#include <iostream>

#include "rmtlab/cli.hpp"

int main(int argc, char** argv) {
    // Training reallocates multi-megabyte activation buffers every step; keep
    // them on the heap instead of round-tripping through mmap.
    mallopt(M_MMAP_THRESHOLD, 1 << 28);
    mallopt(M_TRIM_THRESHOLD, 1 << 29);
    return rmtlab::cli::parse_and_dispatch(argc, argv, std::cout, std::cerr);
}
