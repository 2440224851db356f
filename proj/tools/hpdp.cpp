#include "hpdp/cli.hpp"

int main(int argc, char** argv) { return hpdp::cli::run(argc, argv); }
