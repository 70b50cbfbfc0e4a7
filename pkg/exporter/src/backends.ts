// Model backends behind a common interface. The stubs are deterministic
// stand-ins for real checkpoints: a real integration implements the same
// interface on top of an inference runtime and plugs in via the
// checkpoint scheme prefix.

import { ExportError } from './types.js';
import { StubTokenizer } from './tokenizer.js';

export interface ClassifierBackend {
  kind: 'classifier';
  tokenizer: StubTokenizer;
  /** raw pre-softmax logits: either class logits or vocabulary logits */
  logits(prompt: string): number[];
  /** length of the logits vector this backend emits */
  width: number;
}

export interface GeneratorBackend {
  kind: 'generator';
  tokenizer: StubTokenizer;
  /** greedy decode: token ids with the greedy token's probability each step */
  generate(prompt: string, maxNewTokens: number): { tokenIds: number[]; tokenProbs: number[] };
}

export type Backend = ClassifierBackend | GeneratorBackend;

// tiny deterministic PRNG so stub outputs depend only on their inputs
function hashString(text: string): number {
  let h = 2166136261 >>> 0;
  for (let i = 0; i < text.length; i++) {
    h = Math.imul(h ^ text.charCodeAt(i), 16777619) >>> 0;
  }
  return h;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function parseParams(raw: string): Map<string, string> {
  const params = new Map<string, string>();
  if (!raw) return params;
  for (const part of raw.split(',')) {
    const [key, value] = part.split('=');
    if (!key || value === undefined) {
      throw new ExportError(`malformed checkpoint parameter '${part}'`);
    }
    params.set(key.trim(), value.trim());
  }
  return params;
}

/** always emits exactly the configured logits, e.g. stub-fixed:0.3;0.7 */
function fixedClassifier(raw: string, tokenizer: StubTokenizer): ClassifierBackend {
  const logits = raw.split(';').map((v) => {
    const x = Number(v);
    if (!Number.isFinite(x)) throw new ExportError(`bad fixed logit '${v}'`);
    return x;
  });
  if (logits.length < 2) {
    throw new ExportError('stub-fixed needs at least two logits');
  }
  return {
    kind: 'classifier',
    tokenizer,
    width: logits.length,
    logits: () => [...logits],
  };
}

/** vocabulary-logit stub: deterministic per (seed, prompt), LLM-style */
function llmClassifier(raw: string, tokenizer: StubTokenizer): ClassifierBackend {
  const params = parseParams(raw);
  const seed = Number(params.get('seed') ?? 0);
  const scale = Number(params.get('scale') ?? 3);
  return {
    kind: 'classifier',
    tokenizer,
    width: tokenizer.vocabSize,
    logits: (prompt: string) => {
      const rand = mulberry32(hashString(prompt) ^ seed);
      const out = new Array<number>(tokenizer.vocabSize);
      for (let i = 0; i < out.length; i++) {
        out[i] = scale * (rand() * 2 - 1);
      }
      return out;
    },
  };
}

/** greedy generator stub emitting a short digit answer with decaying probs */
function stubGenerator(raw: string, tokenizer: StubTokenizer): GeneratorBackend {
  const params = parseParams(raw);
  const seed = Number(params.get('seed') ?? 0);
  const empty = params.get('empty') === 'true';
  return {
    kind: 'generator',
    tokenizer,
    generate: (prompt: string, maxNewTokens: number) => {
      if (empty) return { tokenIds: [], tokenProbs: [] };
      const rand = mulberry32(hashString(prompt) ^ seed);
      const length = 1 + Math.floor(rand() * Math.min(4, maxNewTokens));
      const tokenIds: number[] = [];
      const tokenProbs: number[] = [];
      for (let i = 0; i < length; i++) {
        const digit = Math.floor(rand() * 10);
        tokenIds.push(tokenizer.tokenize(String(digit))[0]);
        // greedy-token probability in (0, 1]
        tokenProbs.push(Math.min(1, 0.35 + 0.65 * rand()));
      }
      return { tokenIds, tokenProbs };
    },
  };
}

export function resolveBackend(checkpoint: string, tokenizer: StubTokenizer): Backend {
  const sep = checkpoint.indexOf(':');
  const scheme = sep < 0 ? checkpoint : checkpoint.slice(0, sep);
  const rest = sep < 0 ? '' : checkpoint.slice(sep + 1);
  switch (scheme) {
    case 'stub-fixed':
      return fixedClassifier(rest, tokenizer);
    case 'stub-llm':
      return llmClassifier(rest, tokenizer);
    case 'stub-gen':
      return stubGenerator(rest, tokenizer);
    default:
      throw new ExportError(
        `no backend for checkpoint '${checkpoint}' ` +
          `(available schemes: stub-fixed, stub-llm, stub-gen)`,
      );
  }
}
