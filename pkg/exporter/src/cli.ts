#!/usr/bin/env node
import { loadSpec, runExport } from './export.js';
import { ExportError } from './types.js';

function main(argv: string[]): number {
  const specIndex = argv.indexOf('--spec');
  if (specIndex < 0 || specIndex + 1 >= argv.length) {
    console.error('usage: cascade-exporter --spec <export-spec.json>');
    return 2;
  }
  try {
    const spec = loadSpec(argv[specIndex + 1]);
    const out = runExport(spec);
    console.log(`wrote ${out} (${spec.mode}, ${spec.models.length} models)`);
    return 0;
  } catch (err) {
    if (err instanceof ExportError) {
      console.error(`error: exporter: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

process.exit(main(process.argv.slice(2)));
