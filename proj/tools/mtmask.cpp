#include "mtmask/cli.hpp"

int main(int argc, char** argv) { return mtmask::cli::dispatch(argc, argv); }
