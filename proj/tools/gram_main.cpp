#include "gram/cli.hpp"

int main(int argc, char** argv) { return gram::cli::dispatch(argc, argv); }
