#include "ldr/cli.hpp"

int main(int argc, char** argv) { return ldr::cli::dispatch(argc, argv); }
