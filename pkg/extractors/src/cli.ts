/** CLI: extract features for one clip.
 *
 *   node dist/cli.js --wav clip.wav --out-dir out --id s0001 \
 *       [--language it] [--speaker spk0] [--expected-frames 75] \
 *       [--t-hat-mode clip_only|whisper_concat_clip] [--audio-dim 768]
 */

import { exit } from "node:process";

import { DEFAULT_CONFIG, extractClip } from "./extract.js";

function parseArgs(argv: string[]): Map<string, string> {
  const out = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`usage error near ${argv[i]}`);
    }
    out.set(argv[i].slice(2), argv[i + 1]);
  }
  return out;
}

export function main(argv: string[]): number {
  let args: Map<string, string>;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(`error: usage: ${(err as Error).message}`);
    return 2;
  }
  const wav = args.get("wav");
  const outDir = args.get("out-dir");
  const id = args.get("id");
  if (!wav || !outDir || !id) {
    console.error("error: usage: --wav, --out-dir and --id are required");
    return 2;
  }
  const config = { ...DEFAULT_CONFIG };
  if (args.has("t-hat-mode")) {
    const mode = args.get("t-hat-mode");
    if (mode !== "clip_only" && mode !== "whisper_concat_clip") {
      console.error(`error: usage: bad --t-hat-mode ${mode}`);
      return 2;
    }
    config.tHatMode = mode;
  }
  if (args.has("audio-dim")) config.audioDim = Number(args.get("audio-dim"));
  try {
    const fragment = extractClip(wav, outDir, {
      id,
      language: args.get("language"),
      speaker: args.get("speaker"),
      expectedFrames: args.has("expected-frames")
        ? Number(args.get("expected-frames"))
        : undefined,
    }, config);
    console.log(JSON.stringify({ id: fragment.id, n_frames: fragment.n_frames }));
    return 0;
  } catch (err) {
    console.error(`error: data: ${(err as Error).message}`);
    return 3;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  exit(main(process.argv.slice(2)));
}
