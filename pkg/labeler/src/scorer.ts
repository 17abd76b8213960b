/**
 * Entailment scoring backends.
 *
 * The pipeline only needs one operation: the probability that each premise
 * entails its paired hypothesis. The production backend runs a pretrained
 * NLI cross-encoder through @huggingface/transformers (ONNX, CPU); tests
 * inject deterministic doubles through the same interface.
 */

export interface PremiseHypothesis {
  premise: string;
  hypothesis: string;
}

export interface EntailmentScorer {
  /** Entailment probability in [0, 1] for each pair, same order as input. */
  score(pairs: ReadonlyArray<PremiseHypothesis>): Promise<number[]>;
}

function softmax(logits: ReadonlyArray<number>): number[] {
  const max = Math.max(...logits);
  const exps = logits.map((z) => Math.exp(z - max));
  const total = exps.reduce((a, b) => a + b, 0);
  return exps.map((e) => e / total);
}

export interface NliScorerOptions {
  /** Hugging Face model id or local model directory. */
  model: string;
  /** Reserve this many tokens of model context for the hypothesis. */
  hypothesisBudget?: number;
  /** Called once per overlong premise after head truncation is applied. */
  onTruncation?: (tokenCount: number, limit: number) => void;
}

/**
 * Cross-encoder NLI scorer: tokenizes (premise, hypothesis) pairs together,
 * takes the softmax over the model's (entailment, neutral, contradiction)
 * classes, and returns the entailment coordinate.
 *
 * Premises longer than the model's input window are head-truncated by the
 * tokenizer; a warning callback fires so callers can report the document.
 */
export class NliScorer implements EntailmentScorer {
  private readonly options: NliScorerOptions;
  private tokenizer: any = null;
  private model: any = null;
  private entailmentIndex = -1;
  private maxLength = 512;

  constructor(options: NliScorerOptions) {
    this.options = options;
  }

  private async load(): Promise<void> {
    if (this.model !== null) return;
    const { AutoTokenizer, AutoModelForSequenceClassification } = await import(
      "@huggingface/transformers"
    );
    try {
      this.tokenizer = await AutoTokenizer.from_pretrained(this.options.model);
      this.model = await AutoModelForSequenceClassification.from_pretrained(this.options.model);
    } catch (cause) {
      throw new Error(`failed to load entailment model ${JSON.stringify(this.options.model)}: ${cause}`, {
        cause,
      });
    }
    const id2label: Record<string, string> = this.model.config.id2label ?? {};
    for (const [id, label] of Object.entries(id2label)) {
      if (/entail/i.test(label)) {
        this.entailmentIndex = Number(id);
      }
    }
    if (this.entailmentIndex === -1) {
      throw new Error(
        `model ${this.options.model} has no entailment class (labels: ${JSON.stringify(id2label)})`,
      );
    }
    this.maxLength = this.tokenizer.model_max_length ?? 512;
  }

  async score(pairs: ReadonlyArray<PremiseHypothesis>): Promise<number[]> {
    await this.load();
    if (pairs.length === 0) return [];
    this.warnOnOverlongPremises(pairs);
    const inputs = this.tokenizer(
      pairs.map((p) => p.premise),
      {
        text_pair: pairs.map((p) => p.hypothesis),
        padding: true,
        truncation: true,
        max_length: this.maxLength,
      },
    );
    const { logits } = await this.model(inputs);
    const [batch, nClasses] = logits.dims;
    const data: Float32Array = logits.data;
    const out: number[] = [];
    for (let i = 0; i < batch; i++) {
      const row = Array.from(data.slice(i * nClasses, (i + 1) * nClasses));
      out.push(softmax(row)[this.entailmentIndex]);
    }
    return out;
  }

  private warnOnOverlongPremises(pairs: ReadonlyArray<PremiseHypothesis>): void {
    if (!this.options.onTruncation) return;
    const budget = this.options.hypothesisBudget ?? 32;
    const limit = this.maxLength - budget;
    const seen = new Set<string>();
    for (const pair of pairs) {
      if (seen.has(pair.premise)) continue;
      seen.add(pair.premise);
      const ids = this.tokenizer(pair.premise, { truncation: false }).input_ids;
      const count = ids.dims[ids.dims.length - 1];
      if (count > limit) {
        this.options.onTruncation(count, limit);
      }
    }
  }
}
