import { readFileSync, writeFileSync } from 'node:fs';

import { resolveBackend, ClassifierBackend, GeneratorBackend } from './backends.js';
import { StubTokenizer } from './tokenizer.js';
import {
  DatasetExample,
  DumpLine,
  ExportError,
  ExportSpec,
  exampleSchema,
  exportSpecSchema,
} from './types.js';

export function loadSpec(path: string): ExportSpec {
  const parsed = exportSpecSchema.safeParse(JSON.parse(readFileSync(path, 'utf-8')));
  if (!parsed.success) {
    const issues = parsed.error.issues.map((i) => `${i.path.join('.')}: ${i.message}`);
    throw new ExportError(`invalid export spec: ${issues.join('; ')}`);
  }
  return parsed.data;
}

export function loadExamples(spec: ExportSpec): DatasetExample[] {
  if (spec.dataset.examples) return spec.dataset.examples;
  const raw = JSON.parse(readFileSync(spec.dataset.path!, 'utf-8'));
  return (raw as unknown[]).map((obj, i) => {
    const parsed = exampleSchema.safeParse(obj);
    if (!parsed.success) {
      throw new ExportError(`dataset entry ${i} is malformed`);
    }
    return parsed.data;
  });
}

function renderPrompt(template: string, example: DatasetExample): string {
  return template.replaceAll('{text}', example.text);
}

/**
 * Map each class index to the single vocabulary token id of its
 * verbalizer word; a verbalizer entry that tokenizes to anything other
 * than one token is a hard error naming the class.
 */
export function resolveVerbalizer(
  verbalizer: Record<string, string>,
  tokenizer: StubTokenizer,
): number[] {
  const classes = Object.keys(verbalizer)
    .map((k) => Number(k))
    .sort((a, b) => a - b);
  if (classes.length < 2) {
    throw new ExportError('verbalizer needs at least two classes');
  }
  classes.forEach((c, i) => {
    if (c !== i) throw new ExportError(`verbalizer classes must be 0..q-1, got ${classes}`);
  });
  const ids = classes.map((c) => {
    const word = verbalizer[String(c)];
    const tokens = tokenizer.tokenize(word);
    if (tokens.length !== 1) {
      throw new ExportError(
        `verbalizer for class ${c} ('${word}') is not a single token ` +
          `(got ${tokens.length} tokens)`,
      );
    }
    return tokens[0];
  });
  if (new Set(ids).size !== ids.length) {
    throw new ExportError('verbalizer words collide on the same token id');
  }
  return ids;
}

function classLogits(vocabLogits: number[], tokenIds: number[]): number[] {
  return tokenIds.map((id) => {
    if (id < 0 || id >= vocabLogits.length) {
      throw new ExportError(`verbalizer token id ${id} outside vocabulary`);
    }
    return vocabLogits[id];
  });
}

export function exportClassification(spec: ExportSpec): DumpLine[] {
  const tokenizer = new StubTokenizer();
  const examples = loadExamples(spec);
  const backends = spec.models.map((m) => {
    const backend = resolveBackend(m.checkpoint, tokenizer);
    if (backend.kind !== 'classifier') {
      throw new ExportError(`checkpoint '${m.checkpoint}' is not a classifier`);
    }
    return backend as ClassifierBackend;
  });

  const verbalizerIds = spec.verbalizer
    ? resolveVerbalizer(spec.verbalizer, tokenizer)
    : null;
  const numClasses = verbalizerIds ? verbalizerIds.length : spec.num_classes;
  if (!numClasses) {
    throw new ExportError('classification export needs a verbalizer or num_classes');
  }

  const lines: DumpLine[] = [
    { type: 'header', num_classes: numClasses, mode: 'classification' },
  ];
  for (const example of examples) {
    if (example.label !== undefined && example.label >= numClasses) {
      throw new ExportError(
        `example '${example.example_id}' label ${example.label} outside [0, ${numClasses})`,
      );
    }
    const prompt = renderPrompt(spec.prompt_template, example);
    for (const [i, model] of spec.models.entries()) {
      const raw = backends[i].logits(prompt);
      let logits: number[];
      if (verbalizerIds) {
        logits = classLogits(raw, verbalizerIds);
      } else {
        if (raw.length !== numClasses) {
          throw new ExportError(
            `checkpoint '${model.checkpoint}' emits ${raw.length} logits, expected ${numClasses}`,
          );
        }
        logits = raw;
      }
      lines.push({
        type: 'logits',
        example_id: example.example_id,
        model_id: model.model_id,
        logits,
        ...(example.label !== undefined ? { label: example.label } : {}),
        group: example.group,
      });
    }
  }
  return lines;
}

export function exportGeneration(spec: ExportSpec): DumpLine[] {
  const tokenizer = new StubTokenizer();
  const examples = loadExamples(spec);
  const backends = spec.models.map((m) => {
    const backend = resolveBackend(m.checkpoint, tokenizer);
    if (backend.kind !== 'generator') {
      throw new ExportError(`checkpoint '${m.checkpoint}' is not a generator`);
    }
    return backend as GeneratorBackend;
  });

  const lines: DumpLine[] = [{ type: 'header', num_classes: 0, mode: 'generation' }];
  for (const example of examples) {
    const prompt = renderPrompt(spec.prompt_template, example);
    for (const [i, model] of spec.models.entries()) {
      const { tokenIds, tokenProbs } = backends[i].generate(prompt, spec.max_new_tokens);
      for (const p of tokenProbs) {
        if (!(p > 0 && p <= 1)) {
          throw new ExportError(
            `checkpoint '${model.checkpoint}' produced token probability ${p} outside (0, 1]`,
          );
        }
      }
      lines.push({
        type: 'gen',
        example_id: example.example_id,
        model_id: model.model_id,
        token_ids: tokenIds,
        token_probs: tokenProbs,
        answer_text: tokenizer.decode(tokenIds),
        ...(example.reference_answer !== undefined
          ? { reference_answer: example.reference_answer }
          : {}),
        group: example.group,
      });
    }
  }
  return lines;
}

export function runExport(spec: ExportSpec): string {
  const lines =
    spec.mode === 'classification' ? exportClassification(spec) : exportGeneration(spec);
  const text = lines.map((l) => JSON.stringify(l)).join('\n') + '\n';
  writeFileSync(spec.output_path, text, 'utf-8');
  return spec.output_path;
}
