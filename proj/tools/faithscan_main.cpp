#include "faithscan/cli.hpp"

int main(int argc, char** argv) { return faithscan::run_cli(argc, argv); }
