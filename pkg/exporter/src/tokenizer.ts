// Word-level stub tokenizer with a small fixed vocabulary. Words outside
// the vocabulary fall back to one token per character, which is how a
// verbalizer entry ends up multi-token.

const BASE_VOCAB = [
  '<eos>',
  'Yes',
  'No',
  'Maybe',
  'true',
  'false',
  'the',
  'a',
  'is',
  'answer',
  '0',
  '1',
  '2',
  '3',
  '4',
  '5',
  '6',
  '7',
  '8',
  '9',
];

export class StubTokenizer {
  private ids = new Map<string, number>();
  private words: string[] = [];

  constructor(extraWords: string[] = []) {
    for (const word of [...BASE_VOCAB, ...extraWords]) {
      if (!this.ids.has(word)) {
        this.ids.set(word, this.words.length);
        this.words.push(word);
      }
    }
    // single characters occupy a dedicated id range after the words
    for (let c = 32; c < 127; c++) {
      const ch = String.fromCharCode(c);
      if (!this.ids.has(ch)) {
        this.ids.set(ch, this.words.length);
        this.words.push(ch);
      }
    }
  }

  get vocabSize(): number {
    return this.words.length;
  }

  get eosId(): number {
    return 0;
  }

  tokenize(text: string): number[] {
    const out: number[] = [];
    for (const word of text.split(/\s+/).filter((w) => w.length > 0)) {
      const id = this.ids.get(word);
      if (id !== undefined) {
        out.push(id);
      } else {
        for (const ch of word) {
          out.push(this.ids.get(ch) ?? this.ids.get(' ')!);
        }
      }
    }
    return out;
  }

  decode(tokenIds: number[]): string {
    return tokenIds
      .filter((id) => id !== this.eosId)
      .map((id) => this.words[id] ?? '?')
      .join(' ');
  }
}
