#include "datamix_cli.hpp"

int main(int argc, char** argv) { return datamix::cli::run(argc, argv); }
