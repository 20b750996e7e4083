/**
 * Plotting entry point.
 *
 *   node dist/cli.js lyapunov --in a.csv b.csv ... --labels A B ... \
 *     --out fig.svg --log
 *   node dist/cli.js miet --in curve.csv [curve2.csv ...] --out fig.svg
 *
 * Exit code 0 on success; 1 on any input error (missing file or column,
 * empty CSV). Inputs are never written to.
 */

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { plotLyapunov, plotMietCurve } from "./plot.js";

export async function run(argv: string[]): Promise<number> {
  const parser = yargs(argv)
    .command("lyapunov", "certificate curves under the dashed barrier")
    .command("miet", "smallest-eigenvalue curve with zero-crossing marker")
    .demandCommand(1)
    .option("in", { type: "string", array: true, demandOption: true })
    .option("labels", { type: "string", array: true, default: [] as string[] })
    .option("out", { type: "string", demandOption: true })
    .option("log", { type: "boolean", default: false })
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      throw err ?? new Error(msg);
    });
  const args = await parser.parse();
  const command = String(args._[0]);
  const job = {
    inputs: args.in as string[],
    labels: (args.labels as string[]) ?? [],
    out: args.out as string,
    logScale: Boolean(args.log),
  };
  if (command === "lyapunov") {
    plotLyapunov(job);
    console.log(`wrote ${job.out}`);
    return 0;
  }
  if (command === "miet") {
    const warnings = plotMietCurve(job);
    for (const w of warnings) {
      console.warn(`warning: ${w}`);
    }
    console.log(`wrote ${job.out}`);
    return 0;
  }
  throw new Error(`unknown command ${command}`);
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url.endsWith("cli.js");
if (invokedDirectly) {
  run(hideBin(process.argv))
    .then((code) => {
      process.exitCode = code;
    })
    .catch((err) => {
      console.error(`error: ${err.message}`);
      process.exitCode = 1;
    });
}
