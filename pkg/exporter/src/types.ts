import { z } from 'zod';

export const exampleSchema = z.object({
  example_id: z.string(),
  text: z.string(),
  label: z.number().int().nonnegative().optional(),
  group: z.string(),
  reference_answer: z.string().optional(),
});
export type DatasetExample = z.infer<typeof exampleSchema>;

export const modelRefSchema = z.object({
  model_id: z.string(),
  checkpoint: z.string(),
  cost_units: z.number().positive().optional(),
});
export type ModelRef = z.infer<typeof modelRefSchema>;

export const exportSpecSchema = z
  .object({
    mode: z.enum(['classification', 'generation']),
    models: z.array(modelRefSchema).min(1),
    dataset: z.object({
      examples: z.array(exampleSchema).min(1).optional(),
      path: z.string().optional(),
      split: z.string().default('test'),
    }),
    prompt_template: z.string().default('{text}'),
    // class index (as string key) -> verbalizer token, e.g. {"0": "Yes", "1": "No"}
    verbalizer: z.record(z.string(), z.string()).optional(),
    num_classes: z.number().int().min(2).optional(),
    batch_size: z.number().int().positive().default(8),
    device: z.string().default('cpu'),
    output_path: z.string(),
    max_new_tokens: z.number().int().positive().default(16),
  })
  .superRefine((spec, ctx) => {
    if (!spec.dataset.examples && !spec.dataset.path) {
      ctx.addIssue({
        code: z.ZodIssueCode.custom,
        message: 'dataset needs either inline examples or a path',
      });
    }
    const costs = spec.models
      .map((m) => m.cost_units)
      .filter((c): c is number => c !== undefined);
    for (let i = 1; i < costs.length; i++) {
      if (costs[i] <= costs[i - 1]) {
        ctx.addIssue({
          code: z.ZodIssueCode.custom,
          message: 'models must be listed cheapest first: cost_units not ascending',
        });
      }
    }
  });
export type ExportSpec = z.infer<typeof exportSpecSchema>;

// records mirror the engine's JSONL dump schema exactly
export type HeaderLine = {
  type: 'header';
  num_classes: number;
  mode: 'classification' | 'generation';
};

export type LogitsLine = {
  type: 'logits';
  example_id: string;
  model_id: string;
  logits: number[];
  label?: number;
  group: string;
  raw_text?: string;
};

export type GenLine = {
  type: 'gen';
  example_id: string;
  model_id: string;
  token_ids: number[];
  token_probs: number[];
  answer_text: string;
  reference_answer?: string;
  group: string;
};

export type DumpLine = HeaderLine | LogitsLine | GenLine;

export class ExportError extends Error {}
