#include "rolefuse/cli.hpp"

int main(int argc, char** argv) { return rolefuse::cli::dispatch(argc, argv); }
