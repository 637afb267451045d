#include "ssls/cli.hpp"

int main(int argc, char** argv) { return ssls::cli::run(argc, argv); }
