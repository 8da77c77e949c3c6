#include "dpvm/cli.hpp"

int main(int argc, char** argv) { return dpvm::cli::dispatch(argc, argv); }
