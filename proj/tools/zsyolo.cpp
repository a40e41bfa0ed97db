#include "zsyolo/cli.hpp"

int main(int argc, char** argv) { return zsyolo::cli::run_cli(argc, argv); }
