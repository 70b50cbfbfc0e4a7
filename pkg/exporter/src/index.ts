export { exportClassification, exportGeneration, loadSpec, resolveVerbalizer, runExport } from './export.js';
export { resolveBackend } from './backends.js';
export { StubTokenizer } from './tokenizer.js';
export { ExportError, exportSpecSchema } from './types.js';
export type { DatasetExample, DumpLine, ExportSpec, GenLine, HeaderLine, LogitsLine, ModelRef } from './types.js';
