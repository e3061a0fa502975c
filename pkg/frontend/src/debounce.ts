/**
 * Trailing debounce: rapid call bursts collapse into one invocation once the
 * burst has settled for `delayMs`. Used so toggling several cells quickly
 * issues a single metrics request for the final state.
 */
export function debounce<A extends unknown[]>(
    fn: (...args: A) => void,
    delayMs = 150,
): (...args: A) => void {
    let timer: ReturnType<typeof setTimeout> | null = null;
    return (...args: A) => {
        if (timer !== null) clearTimeout(timer);
        timer = setTimeout(() => {
            timer = null;
            fn(...args);
        }, delayMs);
    };
}
