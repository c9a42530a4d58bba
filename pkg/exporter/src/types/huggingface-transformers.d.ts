// Minimal ambient declaration so the build stays green when the optional
// encoder dependency is not installed (offline environments).
declare module '@huggingface/transformers' {
  export function pipeline(task: string, model?: string,
                           options?: Record<string, unknown>): Promise<unknown>;
}
